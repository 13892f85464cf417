#include "garden/isolation.hpp"

#include "garden/hashname.hpp"

#include <algorithm>
#include <cstring>
#include <sstream>

namespace garden {

namespace {

// Bounds-checked little-endian reads over the file image.
class ByteReader {
public:
    explicit ByteReader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}

    std::size_t size() const { return bytes_.size(); }

    std::uint8_t u8(std::uint64_t off) const
    {
        check(off, 1);
        return bytes_[off];
    }

    std::uint16_t u16(std::uint64_t off) const
    {
        check(off, 2);
        return static_cast<std::uint16_t>(bytes_[off] | (bytes_[off + 1] << 8));
    }

    std::uint32_t u32(std::uint64_t off) const
    {
        check(off, 4);
        std::uint32_t v = 0;
        for (int i = 3; i >= 0; --i)
            v = (v << 8) | bytes_[off + static_cast<std::uint64_t>(i)];
        return v;
    }

    std::uint64_t u64(std::uint64_t off) const
    {
        check(off, 8);
        std::uint64_t v = 0;
        for (int i = 7; i >= 0; --i)
            v = (v << 8) | bytes_[off + static_cast<std::uint64_t>(i)];
        return v;
    }

    // NUL-terminated string starting at off, bounded by `limit` (file end if 0).
    std::string cstr(std::uint64_t off, std::uint64_t limit = 0) const
    {
        std::uint64_t end = limit ? std::min<std::uint64_t>(limit, bytes_.size())
                                  : bytes_.size();
        if (off >= end)
            throw MalformedElf("string offset out of bounds at offset " +
                               std::to_string(off));
        std::string out;
        for (std::uint64_t i = off; i < end; ++i) {
            if (bytes_[i] == 0)
                return out;
            out += static_cast<char>(bytes_[i]);
        }
        throw MalformedElf("unterminated string at offset " + std::to_string(off));
    }

private:
    void check(std::uint64_t off, std::uint64_t len) const
    {
        if (off > bytes_.size() || bytes_.size() - off < len)
            throw MalformedElf("read past end of file at offset " + std::to_string(off));
    }

    const std::vector<std::uint8_t>& bytes_;
};

constexpr std::uint32_t PT_LOAD = 1;
constexpr std::uint32_t PT_DYNAMIC = 2;
constexpr std::uint32_t PT_INTERP = 3;

constexpr std::int64_t DT_NULL = 0;
constexpr std::int64_t DT_NEEDED = 1;
constexpr std::int64_t DT_STRTAB = 5;
constexpr std::int64_t DT_STRSZ = 10;
constexpr std::int64_t DT_RPATH = 15;
constexpr std::int64_t DT_RUNPATH = 29;

struct Segment {
    std::uint64_t vaddr, offset, filesz;
};

DynInfo parse_elf(const ByteReader& r)
{
    DynInfo info;
    if (r.u8(4) != 2 || r.u8(5) != 1)
        throw UnsupportedElfClass("only 64-bit little-endian ELF is supported");

    std::uint16_t type = r.u16(16);
    info.kind = type == 3 ? FileKind::elf_shared_object : FileKind::elf_binary;

    std::uint64_t phoff = r.u64(32);
    std::uint16_t phentsize = r.u16(54);
    std::uint16_t phnum = r.u16(56);
    if (phentsize < 56)
        throw MalformedElf("program header entry size too small: " +
                           std::to_string(phentsize));

    std::vector<Segment> loads;
    std::uint64_t dyn_off = 0, dyn_size = 0;
    for (std::uint16_t i = 0; i < phnum; ++i) {
        std::uint64_t ph = phoff + static_cast<std::uint64_t>(i) * phentsize;
        std::uint32_t p_type = r.u32(ph);
        std::uint64_t p_offset = r.u64(ph + 8);
        std::uint64_t p_vaddr = r.u64(ph + 16);
        std::uint64_t p_filesz = r.u64(ph + 32);
        if (p_type == PT_LOAD) {
            loads.push_back({p_vaddr, p_offset, p_filesz});
        } else if (p_type == PT_INTERP) {
            if (p_filesz == 0 || p_offset + p_filesz > r.size())
                throw MalformedElf("PT_INTERP out of bounds at offset " +
                                   std::to_string(p_offset));
            info.interpreter = r.cstr(p_offset, p_offset + p_filesz);
        } else if (p_type == PT_DYNAMIC) {
            dyn_off = p_offset;
            dyn_size = p_filesz;
        }
    }
    if (dyn_size == 0)
        return info; // statically linked or no dynamic section

    auto vaddr_to_offset = [&](std::uint64_t addr) -> std::uint64_t {
        for (const auto& seg : loads)
            if (addr >= seg.vaddr && addr < seg.vaddr + seg.filesz)
                return addr - seg.vaddr + seg.offset;
        throw MalformedElf("address " + std::to_string(addr) +
                           " not covered by any PT_LOAD segment");
    };

    // first pass: find the dynamic string table
    std::uint64_t strtab_addr = 0, strsz = 0;
    std::vector<std::pair<std::int64_t, std::uint64_t>> entries;
    for (std::uint64_t off = dyn_off; off + 16 <= dyn_off + dyn_size; off += 16) {
        auto tag = static_cast<std::int64_t>(r.u64(off));
        std::uint64_t val = r.u64(off + 8);
        if (tag == DT_NULL)
            break;
        entries.emplace_back(tag, val);
        if (tag == DT_STRTAB)
            strtab_addr = val;
        else if (tag == DT_STRSZ)
            strsz = val;
    }

    bool wants_strings = std::any_of(entries.begin(), entries.end(), [](const auto& e) {
        return e.first == DT_NEEDED || e.first == DT_RPATH || e.first == DT_RUNPATH;
    });
    if (!wants_strings)
        return info;
    if (strtab_addr == 0)
        throw MalformedElf("dynamic section needs strings but has no DT_STRTAB");

    std::uint64_t strtab_off = vaddr_to_offset(strtab_addr);
    std::uint64_t str_limit = strsz ? strtab_off + strsz : 0;

    std::vector<std::string> rpaths, runpaths;
    for (const auto& [tag, val] : entries) {
        if (tag == DT_NEEDED)
            info.needed.push_back(r.cstr(strtab_off + val, str_limit));
        else if (tag == DT_RPATH)
            rpaths.push_back(r.cstr(strtab_off + val, str_limit));
        else if (tag == DT_RUNPATH)
            runpaths.push_back(r.cstr(strtab_off + val, str_limit));
    }
    for (const auto& group : {rpaths, runpaths})
        for (const auto& joined : group)
            for (const auto& dir : split(joined, ':'))
                if (!dir.empty())
                    info.rpath_dirs.push_back(dir);
    return info;
}

DynInfo parse_manifest(const std::string& text)
{
    DynInfo info;
    info.kind = FileKind::declared_manifest;
    std::istringstream in(text);
    std::string line;
    std::getline(in, line); // "GARDEN-DYNINFO 1", already verified
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        line = trim(line);
        if (line.empty() || line[0] == '#')
            continue;
        auto space = line.find(' ');
        std::string directive = space == std::string::npos ? line : line.substr(0, space);
        std::string arg = space == std::string::npos ? "" : trim(line.substr(space + 1));
        if (directive == "NEEDED" && !arg.empty())
            info.needed.push_back(arg);
        else if (directive == "RPATH" && !arg.empty())
            info.rpath_dirs.push_back(arg);
        else if (directive == "INTERP" && !arg.empty())
            info.interpreter = arg;
        else
            throw MalformedElf("manifest line " + std::to_string(lineno) +
                               ": unknown directive: " + line);
    }
    return info;
}

constexpr std::string_view manifest_magic = "GARDEN-DYNINFO 1";

} // namespace

DynInfo extract_dynamic_deps_bytes(const std::vector<std::uint8_t>& bytes,
                                   const std::string& display_name)
{
    if (bytes.size() >= 4 && bytes[0] == 0x7f && bytes[1] == 'E' && bytes[2] == 'L' &&
        bytes[3] == 'F') {
        try {
            return parse_elf(ByteReader(bytes));
        } catch (const MalformedElf& e) {
            throw MalformedElf(display_name + ": " + e.what());
        }
    }
    if (bytes.size() >= 2 && bytes[0] == '#' && bytes[1] == '!') {
        DynInfo info;
        info.kind = FileKind::script;
        std::string first_line;
        for (std::size_t i = 2; i < bytes.size() && bytes[i] != '\n'; ++i)
            first_line += static_cast<char>(bytes[i]);
        auto tokens = split_whitespace(first_line);
        if (!tokens.empty())
            info.shebang = tokens[0];
        return info;
    }
    std::string text(bytes.begin(), bytes.end());
    auto nl = text.find('\n');
    std::string first = nl == std::string::npos ? text : text.substr(0, nl);
    if (trim(first) == manifest_magic)
        return parse_manifest(text);
    return DynInfo{};
}

DynInfo extract_dynamic_deps(const fs::path& file)
{
    return extract_dynamic_deps_bytes(read_binary_file(file), file.string());
}

namespace {

bool path_in_garden(const fs::path& p, const GardenConfig& config)
{
    for (const auto& root : config.storepath)
        if (path_under(root, p))
            return true;
    if (config.canonical_root && path_under(*config.canonical_root, p))
        return true;
    return false;
}

bool usable_rpath_dir(const std::string& dir)
{
    return !dir.empty() && dir[0] == '/' && dir.find("$ORIGIN") == std::string::npos;
}

} // namespace

CleanReport check_clean(const fs::path& file, const GardenConfig& config)
{
    CleanReport report;
    report.file = file;

    DynInfo info;
    try {
        info = extract_dynamic_deps(file);
    } catch (const UnsupportedElfClass& e) {
        report.note = e.what();
        return report; // out of scope for the scan, vacuously clean
    } catch (const Error& e) {
        report.note = e.what();
        report.clean = false;
        return report;
    }
    report.kind = info.kind;

    // non-absolute and $ORIGIN rpath entries are violations in themselves
    for (const auto& dir : info.rpath_dirs) {
        if (!usable_rpath_dir(dir)) {
            report.resolutions.push_back({dir, std::nullopt, Verdict::violation});
            report.clean = false;
        }
    }

    for (const auto& name : info.needed) {
        Resolution res;
        res.needed = name;
        for (const auto& dir : info.rpath_dirs) {
            if (!usable_rpath_dir(dir))
                continue;
            fs::path candidate = fs::path(dir) / name;
            if (fs::exists(candidate)) {
                res.path = candidate.string();
                break;
            }
        }
        if (res.path && path_in_garden(*res.path, config))
            res.verdict = Verdict::clean;
        else
            report.clean = false;
        report.resolutions.push_back(std::move(res));
    }

    auto check_path = [&](const std::string& p) {
        return path_in_garden(fs::path(p), config) ? InterpVerdict::clean
                                                   : InterpVerdict::violation;
    };
    if (info.interpreter)
        report.interpreter_verdict = check_path(*info.interpreter);
    else if (info.shebang)
        report.interpreter_verdict = check_path(*info.shebang);
    if (report.interpreter_verdict == InterpVerdict::violation)
        report.clean = false;
    return report;
}

std::string CleanReport::render() const
{
    std::string out = file.string() + (clean ? ": clean\n" : ": DIRTY\n");
    if (note)
        out += "  (" + *note + ")\n";
    for (const auto& res : resolutions) {
        out += "  " + res.needed + " => " + (res.path ? *res.path : "NOT-FOUND") + " [" +
               (res.verdict == Verdict::clean ? "clean" : "violation") + "]\n";
    }
    if (interpreter_verdict != InterpVerdict::absent)
        out += std::string("  interpreter [") +
               (interpreter_verdict == InterpVerdict::clean ? "clean" : "violation") + "]\n";
    return out;
}

TreeReport check_tree(const fs::path& dir, const GardenConfig& config)
{
    TreeReport report;
    if (!fs::is_directory(dir))
        return report;

    std::vector<fs::path> files;
    for (const auto& entry : fs::recursive_directory_iterator(
             dir, fs::directory_options::skip_permission_denied))
        if (entry.is_regular_file() && !entry.is_symlink())
            files.push_back(entry.path());
    std::sort(files.begin(), files.end());

    for (const auto& f : files) {
        CleanReport file_report = check_clean(f, config);
        bool checkable = file_report.kind != FileKind::other || file_report.note.has_value();
        if (!checkable)
            continue;
        ++report.files_checked;
        if (!file_report.clean)
            report.clean = false;
        report.files.push_back(std::move(file_report));
    }
    std::stable_sort(report.files.begin(), report.files.end(),
                     [](const CleanReport& a, const CleanReport& b) {
                         return a.clean < b.clean; // violations first
                     });
    return report;
}

std::string TreeReport::render() const
{
    std::string out;
    for (const auto& f : files)
        out += f.render();
    out += std::to_string(files_checked) + " files checked, " +
           (clean ? "clean" : "DIRTY") + "\n";
    return out;
}

std::set<std::string> scan_refs(const fs::path& dir,
                                const std::set<std::string>& known_digests)
{
    std::set<std::string> found;
    if (!fs::is_directory(dir))
        return found;
    for (const auto& entry : fs::recursive_directory_iterator(
             dir, fs::directory_options::skip_permission_denied)) {
        if (!entry.is_regular_file() || entry.is_symlink())
            continue;
        auto bytes = read_binary_file(entry.path());
        std::size_t run_start = 0;
        auto in_alpha = [](std::uint8_t b) {
            return base32_alphabet.find(static_cast<char>(b)) != std::string_view::npos;
        };
        for (std::size_t i = 0; i <= bytes.size(); ++i) {
            bool alpha = i < bytes.size() && in_alpha(bytes[i]);
            if (alpha)
                continue;
            std::size_t run_len = i - run_start;
            if (run_len == digest_chars) {
                std::string run(bytes.begin() + static_cast<std::ptrdiff_t>(run_start),
                                bytes.begin() + static_cast<std::ptrdiff_t>(i));
                if (known_digests.count(run))
                    found.insert(run);
            }
            run_start = i + 1;
        }
    }
    return found;
}

} // namespace garden
