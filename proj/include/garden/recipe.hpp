#pragma once

#include "garden/hashname.hpp"
#include "garden/store.hpp"

#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace garden {

GARDEN_DEFINE_ERROR(SyntaxError, usage);
GARDEN_DEFINE_ERROR(DuplicateKey, usage);
GARDEN_DEFINE_ERROR(UnknownKey, usage);
GARDEN_DEFINE_ERROR(ExportOfUnpinnedSymbol, usage);
GARDEN_DEFINE_ERROR(UnpinnedSymbol, failure);
GARDEN_DEFINE_ERROR(TreetopRequired, failure);

// A dependency reference: an exact hash-name literal, or a symbol resolved
// through the treetop.
struct DepRef {
    enum class Kind { literal, treetop };
    Kind kind = Kind::treetop;
    std::string literal; // rendered hash-name, when kind == literal
};

// One element of a build_X list: a bare symbol or a quoted hash-name literal.
struct BuildElem {
    bool is_literal = false;
    std::string text; // symbol name, or rendered hash-name
};

struct Recipe {
    std::string name;
    std::string version;
    std::optional<std::string> treetop_ref;
    fs::path helper_path;
    std::string install_command;
    std::vector<std::pair<std::string, DepRef>> deps;
    std::vector<std::pair<std::string, std::vector<BuildElem>>> build_vars;
    std::string raw_text; // original file bytes, hashed verbatim

    std::string label() const { return name + "-" + version; }
    const DepRef* find_dep(const std::string& sym) const;
    const std::vector<BuildElem>* find_build_var(const std::string& var) const;
};

Recipe parse_recipe(std::string_view text);

struct Treetop {
    std::string name;
    std::map<std::string, HashName> pins;
    std::vector<std::string> export_list;
};

Treetop parse_treetop(std::string_view text, std::string_view name = "");
Treetop load_treetop(const fs::path& file);

// Resolves a recipe's treetop reference: as a path relative to the recipe
// directory (as-is, then with ".treetop" appended), then as
// "<ref>.treetop" under the configured treetop directory.
std::optional<Treetop> load_treetop_for(const Recipe& recipe, const fs::path& recipe_dir,
                                        const GardenConfig& config);

struct ResolvedDep {
    HashName hashname;
    fs::path store_path;
};

struct ResolvedRecipe {
    Recipe recipe;
    std::map<std::string, ResolvedDep> resolved_deps;          // by symbol
    std::map<std::string, ResolvedDep> literal_deps;           // by rendered form
    std::vector<std::pair<std::string, std::vector<fs::path>>> build_elem_paths;
    std::vector<std::string> dep_hash_list; // sorted unique rendered forms
    HashName self_hashname;
};

struct ResolveInput {
    std::vector<std::uint8_t> helper_bytes;
    std::string system;
};

// Resolves every dependency reference against the storepath (first root
// wins) and computes the package's own hash-name.
ResolvedRecipe resolve_deps(const Recipe& recipe, const std::optional<Treetop>& treetop,
                            const std::vector<fs::path>& storepath,
                            const ResolveInput& input);

} // namespace garden
