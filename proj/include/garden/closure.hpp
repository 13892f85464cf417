#pragma once

#include "garden/store.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace garden {

GARDEN_DEFINE_ERROR(CorruptReferences, failure);
GARDEN_DEFINE_ERROR(DestUnwritable, failure);

// The reflexive-transitive runtime-dependency set of a package, read from
// recorded garden-env/REFERENCES files.
struct ClosureGraph {
    HashName root;
    std::vector<HashName> members; // breadth-first, lexicographic tie-break
    std::map<HashName, std::vector<HashName>> edges;
};

ClosureGraph compute_closure_in(const std::vector<fs::path>& roots, const HashName& root);
ClosureGraph compute_closure(const HashName& root, const GardenConfig& config);

// Drops the final dash-delimited token when it looks like a version
// (leading digit): "gcc-4.6.1" -> "gcc"; "stdenv-linux" stays.
std::string strip_version_stem(std::string_view label);

struct DiamondConflict {
    std::string stem;
    std::vector<HashName> versions;                   // >= 2, distinct digests
    std::vector<std::vector<HashName>> witness_paths; // shortest chain per version
};

// Groups closure members by version-stripped stem; any stem with more than
// one distinct digest is an impossible request to the linker.
std::vector<DiamondConflict> detect_diamond(const ClosureGraph& graph);

enum class ExportMode { full, push };

struct TransferReport {
    std::size_t sent = 0;
    std::size_t skipped = 0;
    std::uintmax_t bytes = 0;
    std::vector<HashName> sent_names;
};

// Copies packages (staging + atomic rename) into dest_root, skipping any
// hash-name already present there.
TransferReport transfer_packages(const std::vector<fs::path>& src_roots,
                                 const std::vector<HashName>& members,
                                 const fs::path& dest_root);

// Full mode sends the whole closure; push sends only the root package.
TransferReport export_closure(const HashName& root, const fs::path& dest_root,
                              ExportMode mode, const GardenConfig& config);

// Emits one UDP datagram "GARDEN-NEW 1 <hashname>\n" to group:port.
// Best-effort: returns false and fills `warning` instead of throwing.
bool notify(const HashName& hn, const std::string& group_and_port,
            std::string* warning = nullptr);

} // namespace garden
