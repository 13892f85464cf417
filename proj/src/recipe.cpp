#include "garden/recipe.hpp"

#include <algorithm>
#include <cctype>
#include <set>

namespace garden {

namespace {

bool symbol_head(char c)
{
    return std::isalpha(static_cast<unsigned char>(c)) || c == '_';
}

bool symbol_char(char c)
{
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_';
}

bool is_symbol(std::string_view s)
{
    if (s.empty() || !symbol_head(s[0]))
        return false;
    return std::all_of(s.begin() + 1, s.end(), [](char c) { return symbol_char(c); });
}

[[noreturn]] void syntax_error(int line, int col, const std::string& what)
{
    throw SyntaxError("syntax error at line " + std::to_string(line) + ", column " +
                      std::to_string(col) + ": " + what);
}

// One physical line with the comment stripped (quote-aware) and position info.
struct Line {
    int number = 0;
    std::string text;
};

std::vector<Line> logical_lines(std::string_view text)
{
    std::vector<Line> out;
    int number = 0;
    for (const auto& raw : split(text, '\n')) {
        ++number;
        std::string stripped;
        bool in_quote = false;
        for (std::size_t i = 0; i < raw.size(); ++i) {
            char c = raw[i];
            if (c == '"' && (i == 0 || raw[i - 1] != '\\'))
                in_quote = !in_quote;
            if (c == '#' && !in_quote)
                break;
            stripped += c;
        }
        if (!trim(stripped).empty())
            out.push_back({number, stripped});
    }
    return out;
}

// Values on the right-hand side of `key = ...`.
struct Value {
    enum class Kind { scalar, list, treetop_marker } kind;
    std::string scalar;
    std::vector<BuildElem> list;
};

std::string parse_quoted(const std::string& s, std::size_t& i, int line)
{
    // expects s[i] == '"'
    std::string out;
    ++i;
    while (i < s.size()) {
        char c = s[i];
        if (c == '\\') {
            if (i + 1 >= s.size())
                syntax_error(line, static_cast<int>(i) + 1, "dangling backslash");
            char next = s[i + 1];
            if (next != '"' && next != '\\')
                syntax_error(line, static_cast<int>(i) + 1,
                             std::string("unsupported escape \\") + next);
            out += next;
            i += 2;
            continue;
        }
        if (c == '"') {
            ++i;
            return out;
        }
        out += c;
        ++i;
    }
    syntax_error(line, static_cast<int>(s.size()), "unterminated string");
}

Value parse_value(const std::string& rhs, int line)
{
    std::string s = trim(rhs);
    if (s.empty())
        syntax_error(line, 1, "missing value");
    Value v{Value::Kind::scalar, {}, {}};
    if (s[0] == '"') {
        std::size_t i = 0;
        v.scalar = parse_quoted(s, i, line);
        if (!trim(s.substr(i)).empty())
            syntax_error(line, static_cast<int>(i) + 1, "trailing text after string");
        return v;
    }
    if (s[0] == '@') {
        if (s != "@treetop")
            syntax_error(line, 1, "expected @treetop, got " + s);
        v.kind = Value::Kind::treetop_marker;
        return v;
    }
    if (s[0] == '[') {
        if (s.back() != ']')
            syntax_error(line, static_cast<int>(s.size()), "unterminated list");
        v.kind = Value::Kind::list;
        std::string inner = s.substr(1, s.size() - 2);
        // items separated by commas and/or whitespace
        std::size_t i = 0;
        while (i < inner.size()) {
            while (i < inner.size() &&
                   (std::isspace(static_cast<unsigned char>(inner[i])) || inner[i] == ','))
                ++i;
            if (i >= inner.size())
                break;
            if (inner[i] == '"') {
                std::string lit = parse_quoted(inner, i, line);
                if (!is_hash_name(lit))
                    throw MalformedHashName("list literal is not a hash-name at line " +
                                            std::to_string(line) + ": \"" + lit + "\"");
                v.list.push_back({true, lit});
                continue;
            }
            std::size_t start = i;
            while (i < inner.size() && !std::isspace(static_cast<unsigned char>(inner[i])) &&
                   inner[i] != ',')
                ++i;
            std::string sym = inner.substr(start, i - start);
            if (!is_symbol(sym))
                syntax_error(line, static_cast<int>(start) + 2, "bad list symbol: " + sym);
            v.list.push_back({false, std::move(sym)});
        }
        return v;
    }
    syntax_error(line, 1, "expected quoted string, list, or @treetop");
}

struct KeyValue {
    std::string key;
    Value value;
};

KeyValue parse_key_value(const Line& line)
{
    const std::string& s = line.text;
    auto eq = s.find('=');
    if (eq == std::string::npos)
        syntax_error(line.number, 1, "expected `key = value`");
    std::string key = trim(s.substr(0, eq));
    if (!is_symbol(key))
        syntax_error(line.number, 1, "bad key: " + key);
    return {std::move(key), parse_value(s.substr(eq + 1), line.number)};
}

} // namespace

const DepRef* Recipe::find_dep(const std::string& sym) const
{
    for (const auto& [name_, ref] : deps)
        if (name_ == sym)
            return &ref;
    return nullptr;
}

const std::vector<BuildElem>* Recipe::find_build_var(const std::string& var) const
{
    for (const auto& [name_, elems] : build_vars)
        if (name_ == var)
            return &elems;
    return nullptr;
}

Recipe parse_recipe(std::string_view text)
{
    Recipe recipe;
    recipe.raw_text = std::string(text);

    enum class Section { top, deps, build } section = Section::top;
    std::set<std::string> seen_top, seen_deps, seen_build;

    for (const auto& line : logical_lines(text)) {
        std::string t = trim(line.text);
        if (t == "[deps]") {
            section = Section::deps;
            continue;
        }
        if (t == "[build]") {
            section = Section::build;
            continue;
        }
        if (t.size() >= 2 && t.front() == '[' && t.back() == ']' &&
            t.find('=') == std::string::npos)
            syntax_error(line.number, 1, "unknown section " + t);

        auto [key, value] = parse_key_value(line);
        switch (section) {
        case Section::top: {
            if (!seen_top.insert(key).second)
                throw DuplicateKey("duplicate key `" + key + "` at line " +
                                   std::to_string(line.number));
            if (value.kind != Value::Kind::scalar)
                syntax_error(line.number, 1, "key `" + key + "` takes a quoted string");
            if (key == "name")
                recipe.name = value.scalar;
            else if (key == "version")
                recipe.version = value.scalar;
            else if (key == "treetop")
                recipe.treetop_ref = value.scalar;
            else if (key == "helper")
                recipe.helper_path = value.scalar;
            else if (key == "install_command")
                recipe.install_command = value.scalar;
            else
                throw UnknownKey("unknown key `" + key + "` at line " +
                                 std::to_string(line.number));
            break;
        }
        case Section::deps: {
            if (!seen_deps.insert(key).second)
                throw DuplicateKey("duplicate dependency `" + key + "` at line " +
                                   std::to_string(line.number));
            DepRef ref;
            if (value.kind == Value::Kind::treetop_marker) {
                ref.kind = DepRef::Kind::treetop;
            } else if (value.kind == Value::Kind::scalar) {
                if (!is_hash_name(value.scalar))
                    throw MalformedHashName("dependency `" + key +
                                            "` is not a hash-name at line " +
                                            std::to_string(line.number) + ": \"" +
                                            value.scalar + "\"");
                ref.kind = DepRef::Kind::literal;
                ref.literal = value.scalar;
            } else {
                syntax_error(line.number, 1,
                             "dependency takes a quoted hash-name or @treetop");
            }
            recipe.deps.emplace_back(key, std::move(ref));
            break;
        }
        case Section::build: {
            if (!seen_build.insert(key).second)
                throw DuplicateKey("duplicate build variable `" + key + "` at line " +
                                   std::to_string(line.number));
            if (value.kind != Value::Kind::list)
                syntax_error(line.number, 1, "build variable takes a [list]");
            recipe.build_vars.emplace_back(key, std::move(value.list));
            break;
        }
        }
    }

    if (recipe.name.empty())
        throw SyntaxError("recipe is missing `name`");
    if (recipe.version.empty())
        throw SyntaxError("recipe is missing `version`");
    if (!is_valid_label(recipe.label()))
        throw SyntaxError("`" + recipe.label() + "` is not a valid package label");
    if (recipe.install_command.empty())
        throw SyntaxError("recipe is missing `install_command`");
    if (recipe.helper_path.empty())
        throw SyntaxError("recipe is missing `helper`");
    return recipe;
}

Treetop parse_treetop(std::string_view text, std::string_view name)
{
    Treetop top;
    top.name = std::string(name);
    bool saw_export = false;

    for (const auto& line : logical_lines(text)) {
        auto [key, value] = parse_key_value(line);
        if (key == "export") {
            if (saw_export)
                throw DuplicateKey("duplicate export list at line " +
                                   std::to_string(line.number));
            if (value.kind != Value::Kind::list)
                syntax_error(line.number, 1, "export takes a [list]");
            for (const auto& elem : value.list) {
                if (elem.is_literal)
                    syntax_error(line.number, 1, "export list entries must be symbols");
                top.export_list.push_back(elem.text);
            }
            saw_export = true;
            continue;
        }
        if (value.kind != Value::Kind::scalar)
            syntax_error(line.number, 1, "pin takes a quoted hash-name");
        if (top.pins.count(key))
            throw DuplicateKey("duplicate pin `" + key + "` at line " +
                               std::to_string(line.number));
        top.pins.emplace(key, parse_hash_name(value.scalar));
    }

    for (const auto& sym : top.export_list)
        if (!top.pins.count(sym))
            throw ExportOfUnpinnedSymbol("export of unpinned symbol: " + sym);
    return top;
}

Treetop load_treetop(const fs::path& file)
{
    return parse_treetop(read_text_file(file), file.stem().string());
}

std::optional<Treetop> load_treetop_for(const Recipe& recipe, const fs::path& recipe_dir,
                                        const GardenConfig& config)
{
    if (!recipe.treetop_ref)
        return std::nullopt;
    const std::string& ref = *recipe.treetop_ref;

    fs::path as_path = fs::path(ref).is_absolute() ? fs::path(ref) : recipe_dir / ref;
    if (fs::is_regular_file(as_path))
        return load_treetop(as_path);
    fs::path with_ext = as_path;
    with_ext += ".treetop";
    if (fs::is_regular_file(with_ext))
        return load_treetop(with_ext);
    if (config.treetop_dir) {
        fs::path in_dir = *config.treetop_dir / (ref + ".treetop");
        if (fs::is_regular_file(in_dir))
            return load_treetop(in_dir);
    }
    throw Error("treetop not found: " + ref);
}

namespace {

ResolvedDep locate_dep(const HashName& hn, const std::vector<fs::path>& storepath)
{
    return {hn, locate_in(storepath, hn)};
}

} // namespace

ResolvedRecipe resolve_deps(const Recipe& recipe, const std::optional<Treetop>& treetop,
                            const std::vector<fs::path>& storepath,
                            const ResolveInput& input)
{
    if (storepath.empty())
        throw Error("resolve_deps: empty storepath");

    ResolvedRecipe rr;
    rr.recipe = recipe;

    auto resolve_symbol = [&](const std::string& sym) -> const ResolvedDep& {
        auto it = rr.resolved_deps.find(sym);
        if (it != rr.resolved_deps.end())
            return it->second;
        if (const DepRef* ref = recipe.find_dep(sym)) {
            if (ref->kind == DepRef::Kind::literal) {
                auto dep = locate_dep(parse_hash_name(ref->literal), storepath);
                return rr.resolved_deps.emplace(sym, std::move(dep)).first->second;
            }
            if (!treetop)
                throw TreetopRequired("dependency `" + sym +
                                      "` needs a treetop, but the recipe names none");
            auto pin = treetop->pins.find(sym);
            if (pin == treetop->pins.end())
                throw UnpinnedSymbol("symbol `" + sym + "` is not pinned by treetop " +
                                     treetop->name);
            auto dep = locate_dep(pin->second, storepath);
            return rr.resolved_deps.emplace(sym, std::move(dep)).first->second;
        }
        // not declared under [deps]: fall back to the treetop directly
        if (!treetop)
            throw TreetopRequired("symbol `" + sym +
                                  "` is not in [deps] and the recipe names no treetop");
        auto pin = treetop->pins.find(sym);
        if (pin == treetop->pins.end())
            throw UnpinnedSymbol("symbol `" + sym + "` is neither in [deps] nor pinned by treetop " +
                                 treetop->name);
        auto dep = locate_dep(pin->second, storepath);
        return rr.resolved_deps.emplace(sym, std::move(dep)).first->second;
    };

    for (const auto& [sym, ref] : recipe.deps) {
        (void)ref;
        resolve_symbol(sym);
    }

    for (const auto& [var, elems] : recipe.build_vars) {
        std::vector<fs::path> paths;
        for (const auto& elem : elems) {
            if (elem.is_literal) {
                auto hn = parse_hash_name(elem.text);
                auto it = rr.literal_deps.find(elem.text);
                if (it == rr.literal_deps.end())
                    it = rr.literal_deps.emplace(elem.text, locate_dep(hn, storepath)).first;
                paths.push_back(it->second.store_path);
            } else {
                paths.push_back(resolve_symbol(elem.text).store_path);
            }
        }
        rr.build_elem_paths.emplace_back(var, std::move(paths));
    }

    std::set<std::string> dep_set;
    for (const auto& [sym, dep] : rr.resolved_deps) {
        (void)sym;
        dep_set.insert(dep.hashname.render());
    }
    for (const auto& [rendered, dep] : rr.literal_deps) {
        (void)dep;
        dep_set.insert(rendered);
    }
    rr.dep_hash_list.assign(dep_set.begin(), dep_set.end());

    HashInputs inputs;
    inputs.recipe_bytes.assign(recipe.raw_text.begin(), recipe.raw_text.end());
    inputs.helper_bytes = input.helper_bytes;
    inputs.system = input.system;
    inputs.dep_hashes = rr.dep_hash_list;
    rr.self_hashname = HashName{compute_package_hash(inputs), recipe.label()};
    return rr;
}

} // namespace garden
