#include "garden/closure.hpp"

#include <algorithm>
#include <cctype>
#include <cerrno>
#include <cstring>
#include <deque>
#include <set>

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

namespace garden {

namespace {

std::vector<HashName> read_references(const fs::path& pkg, const HashName& owner)
{
    std::vector<HashName> refs;
    fs::path refs_file = pkg / "garden-env" / "REFERENCES";
    if (!fs::is_regular_file(refs_file))
        return refs;
    int lineno = 0;
    for (const auto& line : split(read_text_file(refs_file), '\n')) {
        ++lineno;
        auto tok = trim(line);
        if (tok.empty() || tok[0] == '#')
            continue;
        try {
            refs.push_back(parse_hash_name(tok));
        } catch (const MalformedHashName&) {
            throw CorruptReferences(owner.render() + ": unparseable REFERENCES line " +
                                    std::to_string(lineno) + ": " + tok);
        }
    }
    std::sort(refs.begin(), refs.end());
    refs.erase(std::unique(refs.begin(), refs.end()), refs.end());
    return refs;
}

} // namespace

ClosureGraph compute_closure_in(const std::vector<fs::path>& roots, const HashName& root)
{
    ClosureGraph graph;
    graph.root = root;

    std::set<HashName> seen{root};
    std::vector<HashName> level{root};
    while (!level.empty()) {
        std::sort(level.begin(), level.end());
        std::vector<HashName> next;
        for (const auto& hn : level) {
            graph.members.push_back(hn);
            fs::path pkg;
            try {
                pkg = locate_in(roots, hn);
            } catch (const PackageNotFound&) {
                if (hn == root)
                    throw;
                throw PackageNotFound("broken reference: " + hn.render() +
                                      " (referenced within the closure of " +
                                      root.render() + ") is not in any garden root");
            }
            auto refs = read_references(pkg, hn);
            graph.edges[hn] = refs;
            for (const auto& ref : refs)
                if (seen.insert(ref).second)
                    next.push_back(ref);
        }
        level = std::move(next);
    }
    return graph;
}

ClosureGraph compute_closure(const HashName& root, const GardenConfig& config)
{
    return compute_closure_in(config.storepath, root);
}

std::string strip_version_stem(std::string_view label)
{
    auto dash = label.rfind('-');
    if (dash == std::string_view::npos || dash == 0 || dash + 1 >= label.size())
        return std::string(label);
    auto tail = label.substr(dash + 1);
    if (!std::isdigit(static_cast<unsigned char>(tail[0])))
        return std::string(label);
    for (char c : tail.substr(1))
        if (!std::isalnum(static_cast<unsigned char>(c)) && c != '.' && c != '_')
            return std::string(label);
    return std::string(label.substr(0, dash));
}

namespace {

// Shortest dependency chain root -> target over the closure's edges,
// breadth-first with lexicographic tie-break.
std::vector<HashName> witness_chain(const ClosureGraph& graph, const HashName& target)
{
    std::map<HashName, HashName> parent;
    std::set<HashName> seen{graph.root};
    std::deque<HashName> queue{graph.root};
    while (!queue.empty()) {
        HashName cur = queue.front();
        queue.pop_front();
        if (cur == target)
            break;
        auto it = graph.edges.find(cur);
        if (it == graph.edges.end())
            continue;
        for (const auto& next : it->second) {
            if (seen.insert(next).second) {
                parent.emplace(next, cur);
                queue.push_back(next);
            }
        }
    }
    std::vector<HashName> chain;
    HashName cur = target;
    chain.push_back(cur);
    while (!(cur == graph.root)) {
        auto it = parent.find(cur);
        if (it == parent.end())
            break; // unreachable; members always are, by construction
        cur = it->second;
        chain.push_back(cur);
    }
    std::reverse(chain.begin(), chain.end());
    return chain;
}

} // namespace

std::vector<DiamondConflict> detect_diamond(const ClosureGraph& graph)
{
    std::map<std::string, std::vector<HashName>> by_stem;
    for (const auto& hn : graph.members)
        by_stem[strip_version_stem(hn.label)].push_back(hn);

    std::vector<DiamondConflict> conflicts;
    for (auto& [stem, versions] : by_stem) {
        std::sort(versions.begin(), versions.end(), [](const HashName& a, const HashName& b) {
            if (a.label != b.label)
                return a.label < b.label;
            return a.digest < b.digest;
        });
        versions.erase(std::unique(versions.begin(), versions.end()), versions.end());
        if (versions.size() < 2)
            continue;
        DiamondConflict conflict;
        conflict.stem = stem;
        conflict.versions = versions;
        for (const auto& v : versions)
            conflict.witness_paths.push_back(witness_chain(graph, v));
        conflicts.push_back(std::move(conflict));
    }
    return conflicts;
}

namespace {

std::uintmax_t tree_bytes(const fs::path& dir)
{
    std::uintmax_t total = 0;
    for (const auto& entry : fs::recursive_directory_iterator(dir))
        if (entry.is_regular_file() && !entry.is_symlink())
            total += entry.file_size();
    return total;
}

void copy_tree(const fs::path& from, const fs::path& to)
{
    fs::copy(from, to,
             fs::copy_options::recursive | fs::copy_options::copy_symlinks);
}

} // namespace

TransferReport transfer_packages(const std::vector<fs::path>& src_roots,
                                 const std::vector<HashName>& members,
                                 const fs::path& dest_root)
{
    std::error_code ec;
    fs::create_directories(dest_root, ec);
    if (ec || !fs::is_directory(dest_root))
        throw DestUnwritable("cannot create destination root: " + dest_root.string());

    StoreLock dest_lock(dest_root, std::string("transfer"));

    TransferReport report;
    for (const auto& hn : members) {
        fs::path dest = dest_root / hn.render();
        if (fs::exists(dest)) {
            ++report.skipped;
            continue;
        }
        fs::path src = locate_in(src_roots, hn);
        fs::path staging = staging_dir_for(dest_root, hn);
        try {
            copy_tree(src, staging);
        } catch (const fs::filesystem_error& e) {
            fs::remove_all(staging, ec);
            throw DestUnwritable("copy into " + dest_root.string() + " failed: " + e.what());
        }
        if (::rename(staging.c_str(), dest.c_str()) != 0) {
            int err = errno;
            fs::remove_all(staging, ec);
            if (fs::exists(dest)) { // a concurrent transfer won the rename
                ++report.skipped;
                continue;
            }
            throw DestUnwritable("rename into " + dest_root.string() + ": " +
                                 std::strerror(err));
        }
        ++report.sent;
        report.bytes += tree_bytes(dest);
        report.sent_names.push_back(hn);
    }
    return report;
}

TransferReport export_closure(const HashName& root, const fs::path& dest_root,
                              ExportMode mode, const GardenConfig& config)
{
    std::vector<HashName> members;
    if (mode == ExportMode::push)
        members = {root};
    else
        members = compute_closure(root, config).members;
    return transfer_packages(config.storepath, members, dest_root);
}

bool notify(const HashName& hn, const std::string& group_and_port, std::string* warning)
{
    auto set_warning = [&](const std::string& msg) {
        if (warning)
            *warning = msg;
        return false;
    };

    auto colon = group_and_port.rfind(':');
    if (colon == std::string::npos || colon == 0 || colon + 1 >= group_and_port.size())
        return set_warning("notify group must be <address>:<port>: " + group_and_port);
    std::string host = group_and_port.substr(0, colon);
    int port = std::atoi(group_and_port.c_str() + colon + 1);
    if (port <= 0 || port > 65535)
        return set_warning("bad notify port in: " + group_and_port);

    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(static_cast<std::uint16_t>(port));
    if (inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1)
        return set_warning("bad notify address: " + host);

    int fd = ::socket(AF_INET, SOCK_DGRAM, 0);
    if (fd < 0)
        return set_warning(std::string("notify socket: ") + std::strerror(errno));

    bool multicast = (ntohl(addr.sin_addr.s_addr) >> 28) == 0xe;
    if (multicast) {
        unsigned char ttl = 1, loop = 1;
        setsockopt(fd, IPPROTO_IP, IP_MULTICAST_TTL, &ttl, sizeof ttl);
        setsockopt(fd, IPPROTO_IP, IP_MULTICAST_LOOP, &loop, sizeof loop);
    }

    std::string payload = "GARDEN-NEW 1 " + hn.render() + "\n";
    ssize_t n = ::sendto(fd, payload.data(), payload.size(), 0,
                         reinterpret_cast<sockaddr*>(&addr), sizeof addr);
    if (n < 0 && multicast) {
        // no multicast route on the default interface; retry via loopback
        in_addr iface{};
        iface.s_addr = htonl(INADDR_LOOPBACK);
        setsockopt(fd, IPPROTO_IP, IP_MULTICAST_IF, &iface, sizeof iface);
        n = ::sendto(fd, payload.data(), payload.size(), 0,
                     reinterpret_cast<sockaddr*>(&addr), sizeof addr);
    }
    int err = errno;
    ::close(fd);
    if (n != static_cast<ssize_t>(payload.size()))
        return set_warning(std::string("notify send failed: ") + std::strerror(err));
    return true;
}

} // namespace garden
