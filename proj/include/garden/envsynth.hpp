#pragma once

#include "garden/recipe.hpp"
#include "garden/store.hpp"

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace garden {

GARDEN_DEFINE_ERROR(UnknownVariable, usage);
GARDEN_DEFINE_ERROR(CircularDependency, failure);
GARDEN_DEFINE_ERROR(CacheMissing, usage);
GARDEN_DEFINE_ERROR(CacheStale, usage);

// An environment snapshot: list-valued variables with promotion semantics,
// plain scalars, and shell lines accumulated by adds.
struct Environment {
    std::map<std::string, std::vector<std::string>> vars;
    std::map<std::string, std::string> scalars;
    std::vector<std::string> source_lines;

    bool operator==(const Environment&) const = default;

    // Colon-joined list value (runtime variables are path-style).
    std::string render_var(const std::string& name) const;

    // Every variable as a flat name->value map (scalars win on collision).
    std::map<std::string, std::string> flatten() const;
};

// How a build variable maps package paths to flag text.
struct JoinRule {
    std::vector<std::string> subdirs; // rule-2 well-known subdirectories
    std::string flag_prefix;          // per-entry prefix, e.g. "-I"
    std::string separator;            // between rendered entries
    bool ldflags_form = false;        // "-L<e> -Wl,-rpath,<e>" per entry
};

// Built-in table covers CPPFLAGS, LDFLAGS, PATH, PYTHONPATH; anything else
// joins with ":".
const JoinRule& join_rule(const std::string& var);

// Expands a whitespace-separated garden-env file: tokens that are hash-names
// (or "<hash-name>/suffix") become located store paths; other tokens pass
// through verbatim.
std::vector<std::string> expand_env_file_entries(const std::string& content,
                                                 const std::vector<fs::path>& roots);

// The three-rule build variable expansion over resolved package paths.
std::vector<std::string> expand_build_var(const std::string& var,
                                          const std::vector<fs::path>& elements,
                                          const GardenConfig& config);

struct Toolchain {
    std::optional<fs::path> binutils;
    std::optional<fs::path> glibc;
    std::string dynamic_linker = "ld-linux-x86-64.so.2";
};

// Joins expanded entries into the variable's flag text. For LDFLAGS the
// toolchain adds -B and --dynamic-linker isolation flags.
std::string render_flags(const std::string& var, const std::vector<std::string>& entries,
                         const std::optional<Toolchain>& toolchain = std::nullopt);

// Moves `element` to the front of env.vars[var], never duplicating it.
Environment promote(Environment env, const std::string& var, const std::string& element);

// Composition instructions found inside a package's garden-env directory.
struct CompositionManifest {
    fs::path package_path;
    std::map<std::string, std::string> env_files;            // VAR -> raw content
    std::map<std::string, std::vector<HashName>> deps_files; // VAR -> pre-loads
    std::optional<fs::path> default_script;
    std::vector<HashName> references;
};

CompositionManifest read_manifest(const fs::path& package_path);

struct AddVisit {
    std::set<std::string> done;      // digests fully added
    std::vector<HashName> stack;     // current recursion path
};

// Runtime `add`: pre-loads from DEPS first, then the package's own entries
// promoted front-most, then a source line for default.sh.
Environment add_package(Environment env, const HashName& hn, const GardenConfig& config,
                        AddVisit& visit);
Environment add_package(Environment env, const HashName& hn, const GardenConfig& config);

Environment add_treetop(Environment env, const Treetop& treetop, const GardenConfig& config);

enum class BuildMode { clean, direct };

// The restricted build environment: recipe scalars, one scalar per resolved
// dep, rendered build variables, HOME=/homeless-shelter, and PATH from
// build_PATH or the /path-not-set sentinel. Everything lands in scalars.
Environment synth_build_env(const ResolvedRecipe& rr, const fs::path& out_path,
                            BuildMode mode, const GardenConfig& config);

// Deterministic per-package scratch directory (fresh contents on each call).
fs::path build_tmp_dir(const HashName& hn);

void write_env_cache(const Environment& env, const std::string& recipe_digest,
                     const fs::path& dir);
Environment load_env_cache(const fs::path& dir, const std::string& current_recipe_digest);

} // namespace garden
