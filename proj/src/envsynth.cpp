#include "garden/envsynth.hpp"

#include <algorithm>
#include <sstream>

namespace garden {

std::string Environment::render_var(const std::string& name) const
{
    auto it = vars.find(name);
    if (it == vars.end())
        return {};
    return join(it->second, ":");
}

std::map<std::string, std::string> Environment::flatten() const
{
    std::map<std::string, std::string> out;
    for (const auto& [name, list] : vars) {
        (void)list;
        out[name] = render_var(name);
    }
    for (const auto& [name, value] : scalars)
        out[name] = value;
    return out;
}

const JoinRule& join_rule(const std::string& var)
{
    static const std::map<std::string, JoinRule> table = {
        {"CPPFLAGS", {{"include"}, "-I", " ", false}},
        {"LDFLAGS", {{"lib", "lib64"}, "", " ", true}},
        {"PATH", {{"bin"}, "", ":", false}},
        {"PYTHONPATH", {{"lib-python"}, "", ":", false}},
    };
    static const JoinRule fallback{{}, "", ":", false};
    auto it = table.find(var);
    return it == table.end() ? fallback : it->second;
}

std::vector<std::string> expand_env_file_entries(const std::string& content,
                                                 const std::vector<fs::path>& roots)
{
    std::vector<std::string> out;
    for (const auto& token : split_whitespace(content)) {
        std::string head = token;
        std::string suffix;
        auto slash = token.find('/');
        if (slash != std::string::npos) {
            head = token.substr(0, slash);
            suffix = token.substr(slash);
        }
        if (is_hash_name(head)) {
            fs::path located = locate_in(roots, parse_hash_name(head));
            out.push_back(located.string() + suffix);
        } else {
            out.push_back(token);
        }
    }
    return out;
}

namespace {

void expand_element(const std::string& var, const fs::path& element,
                    const std::vector<fs::path>& roots, std::vector<std::string>& out,
                    std::set<std::string>& visiting)
{
    if (!visiting.insert(element.string()).second)
        return; // propagated-user-env loop

    // rule 1: an explicit garden-env/<VAR> file wins, even when empty
    fs::path env_file = element / "garden-env" / var;
    if (fs::is_regular_file(env_file)) {
        for (auto& entry : expand_env_file_entries(read_text_file(env_file), roots))
            out.push_back(std::move(entry));
        return;
    }

    // rule 2: well-known subdirectories
    const JoinRule& rule = join_rule(var);
    bool found = false;
    for (const auto& sub : rule.subdirs) {
        fs::path dir = element / sub;
        if (fs::is_directory(dir)) {
            out.push_back(dir.string());
            found = true;
        }
    }
    if (found)
        return;

    // rule 3: propagated directories, added then searched recursively
    fs::path propagated = element / "nix-support" / "propagated-user-env";
    if (fs::is_regular_file(propagated)) {
        for (const auto& dir : split_whitespace(read_text_file(propagated))) {
            out.push_back(dir);
            expand_element(var, fs::path(dir), roots, out, visiting);
        }
    }
}

} // namespace

std::vector<std::string> expand_build_var(const std::string& var,
                                          const std::vector<fs::path>& elements,
                                          const GardenConfig& config)
{
    std::vector<std::string> all;
    std::set<std::string> visiting;
    for (const auto& element : elements)
        expand_element(var, element, config.storepath, all, visiting);

    std::vector<std::string> out;
    for (auto& entry : all)
        if (std::find(out.begin(), out.end(), entry) == out.end())
            out.push_back(std::move(entry));
    return out;
}

std::string render_flags(const std::string& var, const std::vector<std::string>& entries,
                         const std::optional<Toolchain>& toolchain)
{
    const JoinRule& rule = join_rule(var);
    std::vector<std::string> parts;
    for (const auto& e : entries) {
        if (rule.ldflags_form)
            parts.push_back("-L" + e + " -Wl,-rpath," + e);
        else
            parts.push_back(rule.flag_prefix + e);
    }
    if (rule.ldflags_form && toolchain) {
        if (toolchain->binutils)
            parts.push_back("-B " + (*toolchain->binutils / "bin").string());
        if (toolchain->glibc) {
            parts.push_back("-B " + (*toolchain->glibc / "lib").string());
            parts.push_back("-Wl,--dynamic-linker," +
                            (*toolchain->glibc / "lib" / toolchain->dynamic_linker).string());
        }
    }
    return join(parts, rule.separator);
}

Environment promote(Environment env, const std::string& var, const std::string& element)
{
    auto& list = env.vars[var];
    list.erase(std::remove(list.begin(), list.end(), element), list.end());
    list.insert(list.begin(), element);
    return env;
}

CompositionManifest read_manifest(const fs::path& package_path)
{
    CompositionManifest m;
    m.package_path = package_path;
    fs::path env_dir = package_path / "garden-env";
    if (!fs::is_directory(env_dir))
        return m;

    for (const auto& entry : fs::directory_iterator(env_dir)) {
        std::string name = entry.path().filename().string();
        if (entry.is_regular_file()) {
            if (name == "default.sh")
                m.default_script = entry.path();
            else if (name == "REFERENCES") {
                for (const auto& tok : split_whitespace(read_text_file(entry.path())))
                    m.references.push_back(parse_hash_name(tok));
            } else if (name != "META")
                m.env_files[name] = read_text_file(entry.path());
        } else if (entry.is_directory() && name == "DEPS") {
            for (const auto& dep_file : fs::directory_iterator(entry.path())) {
                if (!dep_file.is_regular_file())
                    continue;
                std::vector<HashName> names;
                for (const auto& tok : split_whitespace(read_text_file(dep_file.path())))
                    names.push_back(parse_hash_name(tok));
                m.deps_files[dep_file.path().filename().string()] = std::move(names);
            }
        }
    }
    return m;
}

Environment add_package(Environment env, const HashName& hn, const GardenConfig& config,
                        AddVisit& visit)
{
    for (const auto& on_stack : visit.stack) {
        if (on_stack.digest == hn.digest) {
            std::string cycle;
            for (const auto& h : visit.stack)
                cycle += h.render() + " -> ";
            cycle += hn.render();
            throw CircularDependency("circular dependency: " + cycle);
        }
    }
    if (visit.done.count(hn.digest))
        return env;

    fs::path pkg = locate(hn, config);
    CompositionManifest manifest = read_manifest(pkg);

    visit.stack.push_back(hn);
    for (const auto& [var, preloads] : manifest.deps_files) {
        (void)var;
        for (const auto& dep : preloads)
            env = add_package(std::move(env), dep, config, visit);
    }
    visit.stack.pop_back();
    visit.done.insert(hn.digest);

    for (const auto& var : config.runtime_vars) {
        auto it = manifest.env_files.find(var);
        if (it == manifest.env_files.end())
            continue;
        auto entries = expand_env_file_entries(it->second, config.storepath);
        // promote in reverse so the file's first entry ends up front-most
        for (auto rit = entries.rbegin(); rit != entries.rend(); ++rit)
            env = promote(std::move(env), var, *rit);
    }

    if (manifest.default_script)
        env.source_lines.push_back("source " + manifest.default_script->string());
    return env;
}

Environment add_package(Environment env, const HashName& hn, const GardenConfig& config)
{
    AddVisit visit;
    return add_package(std::move(env), hn, config, visit);
}

Environment add_treetop(Environment env, const Treetop& treetop, const GardenConfig& config)
{
    AddVisit visit;
    for (const auto& sym : treetop.export_list) {
        auto pin = treetop.pins.find(sym);
        if (pin == treetop.pins.end())
            throw ExportOfUnpinnedSymbol("export of unpinned symbol: " + sym);
        env = add_package(std::move(env), pin->second, config, visit);
    }
    return env;
}

fs::path build_tmp_dir(const HashName& hn)
{
    fs::path tmp = fs::temp_directory_path() / ("garden-build-" + hn.render());
    std::error_code ec;
    fs::remove_all(tmp, ec);
    fs::create_directories(tmp);
    return tmp;
}

Environment synth_build_env(const ResolvedRecipe& rr, const fs::path& out_path,
                            BuildMode mode, const GardenConfig& config)
{
    (void)mode; // direct builds get the same environment as clean builds
    Environment env;
    env.scalars["out"] = out_path.string();
    env.scalars["system"] = config.system;
    env.scalars["name"] = rr.recipe.label();
    env.scalars["install_command"] = rr.recipe.install_command;
    env.scalars["TMP"] = build_tmp_dir(rr.self_hashname).string();
    env.scalars["HOME"] = "/homeless-shelter";

    for (const auto& [sym, dep] : rr.resolved_deps)
        env.scalars[sym] = dep.store_path.string();

    std::optional<Toolchain> toolchain;
    auto binutils = rr.resolved_deps.find("binutils");
    auto glibc = rr.resolved_deps.find("glibc");
    if (binutils != rr.resolved_deps.end() || glibc != rr.resolved_deps.end()) {
        toolchain = Toolchain{};
        toolchain->dynamic_linker = config.dynamic_linker;
        if (binutils != rr.resolved_deps.end())
            toolchain->binutils = binutils->second.store_path;
        if (glibc != rr.resolved_deps.end())
            toolchain->glibc = glibc->second.store_path;
    }

    bool have_path = false;
    for (const auto& [var, elem_paths] : rr.build_elem_paths) {
        auto entries = expand_build_var(var, elem_paths, config);
        auto rendered = render_flags(var, entries, var == "LDFLAGS" ? toolchain : std::nullopt);
        env.scalars[var] = rendered;
        if (var == "PATH")
            have_path = true;
    }
    if (!have_path)
        env.scalars["PATH"] = "/path-not-set";
    return env;
}

void write_env_cache(const Environment& env, const std::string& recipe_digest,
                     const fs::path& dir)
{
    fs::path cache_dir = dir / ".garden";
    fs::create_directories(cache_dir);
    std::string out = "recipe_digest=" + recipe_digest + "\n";
    for (const auto& [name, value] : env.flatten())
        out += name + "=" + value + "\n";
    write_file_atomic(cache_dir / "envcache", out);
}

Environment load_env_cache(const fs::path& dir, const std::string& current_recipe_digest)
{
    fs::path cache_file = dir / ".garden" / "envcache";
    if (!fs::is_regular_file(cache_file))
        throw CacheMissing("no build environment cache in " + dir.string());

    std::istringstream in(read_text_file(cache_file));
    std::string line;
    if (!std::getline(in, line) || line.rfind("recipe_digest=", 0) != 0)
        throw CacheStale("environment cache in " + dir.string() + " is unreadable");
    std::string stored = line.substr(std::string("recipe_digest=").size());
    if (stored != current_recipe_digest)
        throw CacheStale("recipe changed since configure (cached " + stored + ")");

    Environment env;
    while (std::getline(in, line)) {
        if (line.empty())
            continue;
        auto eq = line.find('=');
        if (eq == std::string::npos)
            throw CacheStale("environment cache line without '=': " + line);
        env.scalars[line.substr(0, eq)] = line.substr(eq + 1);
    }
    return env;
}

} // namespace garden
