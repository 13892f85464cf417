#pragma once

#include "garden/store.hpp"

#include <optional>
#include <set>
#include <string>
#include <vector>

namespace garden {

GARDEN_DEFINE_ERROR(MalformedElf, failure);
GARDEN_DEFINE_ERROR(UnsupportedElfClass, failure);

enum class FileKind { elf_binary, elf_shared_object, script, declared_manifest, other };

// Dynamic-link information extracted from a built artifact.
struct DynInfo {
    FileKind kind = FileKind::other;
    std::vector<std::string> needed;     // library names, e.g. "libm.so.6"
    std::vector<std::string> rpath_dirs; // DT_RPATH then DT_RUNPATH, colon-split
    std::optional<std::string> interpreter; // PT_INTERP
    std::optional<std::string> shebang;     // scripts
};

// Parses 64-bit little-endian ELF, "#!" scripts, and "GARDEN-DYNINFO 1"
// manifests. Anything else is kind=other. Never reads past file bounds.
DynInfo extract_dynamic_deps(const fs::path& file);
DynInfo extract_dynamic_deps_bytes(const std::vector<std::uint8_t>& bytes,
                                   const std::string& display_name);

enum class Verdict { clean, violation };

struct Resolution {
    std::string needed;
    std::optional<std::string> path; // resolved path; empty = NOT-FOUND
    Verdict verdict = Verdict::violation;
};

enum class InterpVerdict { clean, violation, absent };

struct CleanReport {
    fs::path file;
    FileKind kind = FileKind::other;
    std::vector<Resolution> resolutions;
    InterpVerdict interpreter_verdict = InterpVerdict::absent;
    bool clean = true;
    std::optional<std::string> note; // parse failure or unsupported class

    std::string render() const; // ldd-style "  <needed> => <path> [verdict]"
};

// Resolves every needed name against the rpath directories in order; a
// resolution is clean iff the path lies under a storepath root or the
// canonical root. Verdicts, not exceptions.
CleanReport check_clean(const fs::path& file, const GardenConfig& config);

struct TreeReport {
    std::vector<CleanReport> files; // violations first, then by path
    std::size_t files_checked = 0;
    bool clean = true;

    std::string render() const;
};

// Applies check_clean to every ELF, script, and manifest file under dir.
TreeReport check_tree(const fs::path& dir, const GardenConfig& config);

// Scans file bytes under dir for exact 32-character alphabet runs that match
// known digests (delimited by non-alphabet bytes on both sides).
std::set<std::string> scan_refs(const fs::path& dir,
                                const std::set<std::string>& known_digests);

} // namespace garden
