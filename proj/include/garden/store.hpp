#pragma once

#include "garden/error.hpp"
#include "garden/hashname.hpp"
#include "garden/util.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace garden {

GARDEN_DEFINE_ERROR(PackageNotFound, failure);
GARDEN_DEFINE_ERROR(CrossDeviceStaging, failure);
GARDEN_DEFINE_ERROR(CorruptExisting, failure);
GARDEN_DEFINE_ERROR(CanonicalUnwritable, failure);

// Garden roots and related settings. The storepath is searched in order;
// the personal root always precedes the public root.
struct GardenConfig {
    fs::path public_root;
    fs::path personal_root;
    std::vector<fs::path> storepath;
    std::optional<fs::path> central;
    std::optional<fs::path> central_dest;
    std::optional<fs::path> canonical_root;
    std::optional<fs::path> treetop_dir;
    std::string system = "x86_64-linux";
    std::string dynamic_linker = "ld-linux-x86-64.so.2";
    std::vector<std::string> runtime_vars = {"PATH", "PYTHONPATH", "LD_LIBRARY_PATH", "MANPATH"};
    std::optional<std::string> notify_group;

    // Config file, then environment variables (GARDEN_ROOT, GARDEN_PERSONAL_ROOT,
    // GARDEN_STOREPATH, GARDEN_CENTRAL, GARDEN_CENTRAL_DEST) on top.
    static GardenConfig from_environment();
    static GardenConfig from_file(const fs::path& config_file);

    // Deduplicates storepath and guarantees the personal-first ordering.
    void normalize();

    // storepath without the personal root (public-install resolution).
    std::vector<fs::path> public_storepath() const;
};

enum class InstallKind { personal, public_ };

std::string to_string(InstallKind k);
InstallKind install_kind_from_string(std::string_view s);

struct PackageMeta {
    HashName hashname;
    std::int64_t born_on = 0; // UTC seconds
    std::optional<std::string> git_revision;
    std::optional<std::string> source_url;
    InstallKind mode = InstallKind::personal;

    std::string render() const;
    static PackageMeta parse(const std::string& text, const HashName& hn);
};

// First "<root>/<rendered>" that exists, scanning roots in order.
fs::path locate_in(const std::vector<fs::path>& roots, const HashName& hn);
std::optional<fs::path> try_locate_in(const std::vector<fs::path>& roots, const HashName& hn);
fs::path locate(const HashName& hn, const GardenConfig& config);

struct AvailEntry {
    HashName hashname;
    fs::path root;
    PackageMeta meta;
};

// Substring match on labels across all roots; same digest reported once
// (first root wins), sorted by label then born_on.
std::vector<AvailEntry> avail(std::string_view name_pattern, const GardenConfig& config);

// All hash-named package directories directly under a root.
std::vector<HashName> list_root(const fs::path& root);

// Per-hashname advisory lock under "<root>/.locks/". Blocks until acquired;
// reacquisition within one process is refcounted, not deadlocked.
class StoreLock {
public:
    StoreLock(const fs::path& root, const HashName& hn);
    StoreLock(const fs::path& root, const std::string& key);
    ~StoreLock();
    StoreLock(const StoreLock&) = delete;
    StoreLock& operator=(const StoreLock&) = delete;

private:
    int fd_ = -1;
};

// Renames a fully populated staging tree to "<root>/<hashname>". META is
// written into the staging tree first so the store path appears complete.
// An existing destination wins: staging is discarded and the existing path
// returned (equal hashes are the same package).
fs::path install_atomic(const fs::path& staging_dir, const HashName& hn,
                        const fs::path& root, const PackageMeta& meta);

struct LinkReport {
    std::vector<std::string> created;
    std::vector<std::string> already_present;
    std::vector<std::string> conflicting;
};

// Symlinks every package from every storepath root into canonical_root.
LinkReport compose_roots(const GardenConfig& config);

struct ShowResult {
    fs::path path;
    PackageMeta meta;
    // garden-env file name -> first line, hash-name tokens expanded when locatable
    std::vector<std::pair<std::string, std::string>> env_files;
};

ShowResult show(const HashName& hn, const GardenConfig& config);

// Staging area for builds targeting `root`; same filesystem as the root.
fs::path staging_dir_for(const fs::path& root, const HashName& hn);

} // namespace garden
