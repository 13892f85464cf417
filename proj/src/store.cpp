#include "garden/store.hpp"

#include <algorithm>
#include <cerrno>
#include <cstdlib>
#include <cstring>
#include <ctime>
#include <map>
#include <mutex>
#include <sstream>

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

namespace garden {

namespace {

std::optional<std::string> getenv_opt(const char* name)
{
    const char* v = std::getenv(name);
    if (!v || !*v)
        return std::nullopt;
    return std::string(v);
}

// Minimal `key = "value"` reader for the config file. Full recipe parsing
// lives in the recipe module; the config file only uses scalar lines.
std::map<std::string, std::string> parse_scalar_file(const std::string& text)
{
    std::map<std::string, std::string> out;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        auto hash = line.find('#');
        if (hash != std::string::npos)
            line = line.substr(0, hash);
        line = trim(line);
        if (line.empty())
            continue;
        auto eq = line.find('=');
        if (eq == std::string::npos)
            continue;
        std::string key = trim(line.substr(0, eq));
        std::string val = trim(line.substr(eq + 1));
        if (val.size() >= 2 && val.front() == '"' && val.back() == '"')
            val = val.substr(1, val.size() - 2);
        out[key] = val;
    }
    return out;
}

} // namespace

void GardenConfig::normalize()
{
    if (personal_root.empty())
        personal_root = public_root;
    std::vector<fs::path> ordered;
    auto push_unique = [&](const fs::path& p) {
        fs::path abs = fs::absolute(p).lexically_normal();
        if (std::find(ordered.begin(), ordered.end(), abs) == ordered.end())
            ordered.push_back(abs);
    };
    push_unique(personal_root);
    for (const auto& p : storepath)
        push_unique(p);
    push_unique(public_root);
    storepath = std::move(ordered);
    personal_root = fs::absolute(personal_root).lexically_normal();
    public_root = fs::absolute(public_root).lexically_normal();
}

std::vector<fs::path> GardenConfig::public_storepath() const
{
    std::vector<fs::path> out;
    for (const auto& p : storepath)
        if (p != personal_root)
            out.push_back(p);
    return out;
}

GardenConfig GardenConfig::from_file(const fs::path& config_file)
{
    GardenConfig cfg;
    cfg.public_root = "/garden";
    if (auto home = getenv_opt("HOME"))
        cfg.personal_root = fs::path(*home) / "garden";
    else
        cfg.personal_root = cfg.public_root;

    if (fs::exists(config_file)) {
        auto kv = parse_scalar_file(read_text_file(config_file));
        auto get = [&](const char* k) -> std::optional<std::string> {
            auto it = kv.find(k);
            if (it == kv.end() || it->second.empty())
                return std::nullopt;
            return it->second;
        };
        if (auto v = get("public_root")) cfg.public_root = *v;
        if (auto v = get("personal_root")) cfg.personal_root = *v;
        if (auto v = get("storepath")) {
            cfg.storepath.clear();
            for (const auto& p : split(*v, ':'))
                if (!p.empty())
                    cfg.storepath.emplace_back(p);
        }
        if (auto v = get("central")) cfg.central = fs::path(*v);
        if (auto v = get("central_dest")) cfg.central_dest = fs::path(*v);
        if (auto v = get("canonical_root")) cfg.canonical_root = fs::path(*v);
        if (auto v = get("treetop_dir")) cfg.treetop_dir = fs::path(*v);
        if (auto v = get("system")) cfg.system = *v;
        if (auto v = get("dynamic_linker")) cfg.dynamic_linker = *v;
        if (auto v = get("notify_group")) cfg.notify_group = *v;
        if (auto v = get("runtime_vars")) {
            cfg.runtime_vars.clear();
            for (const auto& name : split_whitespace(*v))
                cfg.runtime_vars.push_back(name);
        }
    }
    return cfg;
}

GardenConfig GardenConfig::from_environment()
{
    fs::path config_file;
    if (auto xdg = getenv_opt("XDG_CONFIG_HOME"))
        config_file = fs::path(*xdg) / "garden" / "config";
    else if (auto home = getenv_opt("HOME"))
        config_file = fs::path(*home) / ".config" / "garden" / "config";

    GardenConfig cfg = from_file(config_file);

    if (auto v = getenv_opt("GARDEN_ROOT"))
        cfg.public_root = *v;
    if (auto v = getenv_opt("GARDEN_PERSONAL_ROOT"))
        cfg.personal_root = *v;
    if (auto v = getenv_opt("GARDEN_STOREPATH")) {
        cfg.storepath.clear();
        for (const auto& p : split(*v, ':'))
            if (!p.empty())
                cfg.storepath.emplace_back(p);
    }
    if (auto v = getenv_opt("GARDEN_CENTRAL"))
        cfg.central = fs::path(*v);
    if (auto v = getenv_opt("GARDEN_CENTRAL_DEST"))
        cfg.central_dest = fs::path(*v);

    cfg.normalize();
    return cfg;
}

std::string to_string(InstallKind k)
{
    return k == InstallKind::personal ? "personal" : "public";
}

InstallKind install_kind_from_string(std::string_view s)
{
    if (s == "personal")
        return InstallKind::personal;
    if (s == "public")
        return InstallKind::public_;
    throw Error("unknown install mode: " + std::string(s));
}

std::string PackageMeta::render() const
{
    std::string out;
    out += "born_on = " + std::to_string(born_on) + "\n";
    out += "mode = " + to_string(mode) + "\n";
    if (git_revision)
        out += "revision = " + *git_revision + "\n";
    if (source_url)
        out += "source_url = " + *source_url + "\n";
    return out;
}

PackageMeta PackageMeta::parse(const std::string& text, const HashName& hn)
{
    PackageMeta meta;
    meta.hashname = hn;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        auto eq = line.find('=');
        if (eq == std::string::npos)
            continue;
        std::string key = trim(line.substr(0, eq));
        std::string val = trim(line.substr(eq + 1));
        if (key == "born_on")
            meta.born_on = std::strtoll(val.c_str(), nullptr, 10);
        else if (key == "mode")
            meta.mode = install_kind_from_string(val);
        else if (key == "revision")
            meta.git_revision = val;
        else if (key == "source_url")
            meta.source_url = val;
    }
    return meta;
}

std::optional<fs::path> try_locate_in(const std::vector<fs::path>& roots, const HashName& hn)
{
    for (const auto& root : roots) {
        fs::path candidate = root / hn.render();
        if (fs::exists(candidate))
            return candidate;
    }
    return std::nullopt;
}

fs::path locate_in(const std::vector<fs::path>& roots, const HashName& hn)
{
    if (auto p = try_locate_in(roots, hn))
        return *p;
    throw PackageNotFound("package not found in any garden root: " + hn.render());
}

fs::path locate(const HashName& hn, const GardenConfig& config)
{
    return locate_in(config.storepath, hn);
}

std::vector<HashName> list_root(const fs::path& root)
{
    std::vector<HashName> out;
    if (!fs::is_directory(root))
        return out;
    for (const auto& entry : fs::directory_iterator(root)) {
        auto name = entry.path().filename().string();
        if (name.empty() || name[0] == '.')
            continue;
        if (is_hash_name(name))
            out.push_back(parse_hash_name(name));
    }
    std::sort(out.begin(), out.end());
    return out;
}

namespace {

PackageMeta read_meta_or_default(const fs::path& pkg, const HashName& hn)
{
    fs::path meta_file = pkg / "garden-env" / "META";
    if (fs::exists(meta_file)) {
        try {
            return PackageMeta::parse(read_text_file(meta_file), hn);
        } catch (const Error&) {
        }
    }
    PackageMeta meta;
    meta.hashname = hn;
    return meta;
}

} // namespace

std::vector<AvailEntry> avail(std::string_view name_pattern, const GardenConfig& config)
{
    std::vector<AvailEntry> out;
    std::vector<std::string> seen_digests;
    for (const auto& root : config.storepath) {
        for (const auto& hn : list_root(root)) {
            if (!name_pattern.empty() && hn.label.find(name_pattern) == std::string::npos)
                continue;
            if (std::find(seen_digests.begin(), seen_digests.end(), hn.digest) !=
                seen_digests.end())
                continue;
            seen_digests.push_back(hn.digest);
            out.push_back({hn, root, read_meta_or_default(root / hn.render(), hn)});
        }
    }
    std::sort(out.begin(), out.end(), [](const AvailEntry& a, const AvailEntry& b) {
        if (a.hashname.label != b.hashname.label)
            return a.hashname.label < b.hashname.label;
        if (a.meta.born_on != b.meta.born_on)
            return a.meta.born_on < b.meta.born_on;
        return a.hashname.digest < b.hashname.digest;
    });
    return out;
}

// flock is per open-file-description, so a second acquisition in the same
// process would deadlock. A process-wide registry shares the descriptor and
// refcounts it instead.
namespace {

struct LockRegistry {
    std::mutex mutex;
    std::map<std::string, std::pair<int, int>> held; // key -> (fd, refcount)
};

LockRegistry& lock_registry()
{
    static LockRegistry reg;
    return reg;
}

} // namespace

StoreLock::StoreLock(const fs::path& root, const HashName& hn)
    : StoreLock(root, hn.digest)
{
}

StoreLock::StoreLock(const fs::path& root, const std::string& lock_key)
{
    fs::path lock_dir = root / ".locks";
    fs::create_directories(lock_dir);
    fs::path lock_file = lock_dir / (lock_key + ".lock");
    std::string key = lock_file.string();

    auto& reg = lock_registry();
    {
        std::lock_guard<std::mutex> guard(reg.mutex);
        auto it = reg.held.find(key);
        if (it != reg.held.end()) {
            it->second.second++;
            fd_ = it->second.first;
            return;
        }
    }
    int fd = ::open(lock_file.c_str(), O_CREAT | O_RDWR | O_CLOEXEC, 0666);
    if (fd < 0)
        throw Error("cannot open lock file " + key + ": " + std::strerror(errno));
    if (::flock(fd, LOCK_EX) != 0) {
        ::close(fd);
        throw Error("flock failed on " + key + ": " + std::strerror(errno));
    }
    std::lock_guard<std::mutex> guard(reg.mutex);
    reg.held[key] = {fd, 1};
    fd_ = fd;
}

StoreLock::~StoreLock()
{
    auto& reg = lock_registry();
    std::lock_guard<std::mutex> guard(reg.mutex);
    for (auto it = reg.held.begin(); it != reg.held.end(); ++it) {
        if (it->second.first == fd_) {
            if (--it->second.second == 0) {
                ::flock(fd_, LOCK_UN);
                ::close(fd_);
                reg.held.erase(it);
            }
            return;
        }
    }
}

fs::path install_atomic(const fs::path& staging_dir, const HashName& hn,
                        const fs::path& root, const PackageMeta& meta)
{
    fs::create_directories(root);
    StoreLock lock(root, hn);

    fs::path dest = root / hn.render();
    if (fs::exists(dest)) {
        fs::path meta_file = dest / "garden-env" / "META";
        if (!fs::exists(meta_file))
            throw CorruptExisting("existing package has no readable META: " + dest.string());
        try {
            PackageMeta::parse(read_text_file(meta_file), hn);
        } catch (const Error& e) {
            throw CorruptExisting("existing package META unreadable: " + dest.string() +
                                  " (" + e.what() + ")");
        }
        std::error_code ec;
        fs::remove_all(staging_dir, ec);
        return dest;
    }

    fs::create_directories(staging_dir / "garden-env");
    write_text_file(staging_dir / "garden-env" / "META", meta.render());

    if (::rename(staging_dir.c_str(), dest.c_str()) != 0) {
        int err = errno;
        if (err == EXDEV)
            throw CrossDeviceStaging("staging dir " + staging_dir.string() +
                                     " is not on the same filesystem as " + root.string());
        throw Error("rename " + staging_dir.string() + " -> " + dest.string() + ": " +
                    std::strerror(err));
    }
    return dest;
}

LinkReport compose_roots(const GardenConfig& config)
{
    if (!config.canonical_root)
        throw CanonicalUnwritable("canonical_root is not configured");
    const fs::path& canon = *config.canonical_root;
    std::error_code ec;
    fs::create_directories(canon, ec);
    if (ec || !fs::is_directory(canon))
        throw CanonicalUnwritable("cannot create canonical root: " + canon.string());

    LinkReport report;
    std::vector<std::string> handled;
    for (const auto& root : config.storepath) {
        for (const auto& hn : list_root(root)) {
            std::string rendered = hn.render();
            if (std::find(handled.begin(), handled.end(), rendered) != handled.end())
                continue;
            handled.push_back(rendered);

            fs::path link_name = canon / rendered;
            fs::path target = root / rendered;
            auto st = fs::symlink_status(link_name);
            if (fs::exists(st)) {
                if (fs::is_symlink(st)) {
                    report.already_present.push_back(rendered);
                } else if (fs::equivalent(link_name, target)) {
                    // the package already lives directly under the canonical root
                    report.already_present.push_back(rendered);
                } else {
                    report.conflicting.push_back(rendered);
                }
                continue;
            }
            fs::create_directory_symlink(target, link_name, ec);
            if (ec)
                throw CanonicalUnwritable("cannot create symlink " + link_name.string() +
                                          ": " + ec.message());
            report.created.push_back(rendered);
        }
    }
    std::sort(report.created.begin(), report.created.end());
    std::sort(report.already_present.begin(), report.already_present.end());
    std::sort(report.conflicting.begin(), report.conflicting.end());
    return report;
}

namespace {

// Lenient hash-name token expansion for display: unlocatable tokens are left
// verbatim.
std::string expand_first_line_lenient(const std::string& content,
                                      const std::vector<fs::path>& roots)
{
    auto nl = content.find('\n');
    std::string line = nl == std::string::npos ? content : content.substr(0, nl);
    std::vector<std::string> out;
    for (const auto& token : split_whitespace(line)) {
        std::string head = token;
        std::string suffix;
        auto slash = token.find('/');
        if (slash != std::string::npos) {
            head = token.substr(0, slash);
            suffix = token.substr(slash);
        }
        if (is_hash_name(head)) {
            if (auto p = try_locate_in(roots, parse_hash_name(head))) {
                out.push_back(p->string() + suffix);
                continue;
            }
        }
        out.push_back(token);
    }
    return join(out, " ");
}

} // namespace

ShowResult show(const HashName& hn, const GardenConfig& config)
{
    ShowResult result;
    result.path = locate(hn, config);
    result.meta = read_meta_or_default(result.path, hn);

    fs::path env_dir = result.path / "garden-env";
    if (fs::is_directory(env_dir)) {
        std::vector<fs::path> files;
        for (const auto& entry : fs::recursive_directory_iterator(env_dir))
            if (entry.is_regular_file())
                files.push_back(entry.path());
        std::sort(files.begin(), files.end());
        for (const auto& f : files) {
            std::string rel = f.lexically_relative(env_dir).string();
            if (rel == "META")
                continue;
            result.env_files.emplace_back(
                rel, expand_first_line_lenient(read_text_file(f), config.storepath));
        }
    }
    return result;
}

fs::path staging_dir_for(const fs::path& root, const HashName& hn)
{
    fs::path staging_area = root / ".staging";
    fs::create_directories(staging_area);
    fs::path staging = staging_area / hn.render();
    std::error_code ec;
    fs::remove_all(staging, ec);
    return staging;
}

} // namespace garden
