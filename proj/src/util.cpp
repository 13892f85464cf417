#include "garden/util.hpp"

#include "garden/error.hpp"

#include <cctype>
#include <cerrno>
#include <cstring>
#include <fstream>
#include <sstream>

#include <fcntl.h>
#include <sys/wait.h>
#include <unistd.h>

namespace garden {

std::string read_text_file(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    if (!in)
        throw Error("cannot open file: " + p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::vector<std::uint8_t> read_binary_file(const fs::path& p)
{
    auto text = read_text_file(p);
    return {text.begin(), text.end()};
}

void write_text_file(const fs::path& p, std::string_view content)
{
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out)
        throw Error("cannot write file: " + p.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out)
        throw Error("short write: " + p.string());
}

void write_file_atomic(const fs::path& p, std::string_view content)
{
    fs::path tmp = p;
    tmp += ".tmp";
    write_text_file(tmp, content);
    std::error_code ec;
    fs::rename(tmp, p, ec);
    if (ec) {
        fs::remove(tmp);
        throw Error("rename failed for " + p.string() + ": " + ec.message());
    }
}

std::vector<std::string> split(std::string_view s, char sep)
{
    std::vector<std::string> out;
    std::size_t start = 0;
    while (start <= s.size()) {
        auto pos = s.find(sep, start);
        if (pos == std::string_view::npos) {
            out.emplace_back(s.substr(start));
            break;
        }
        out.emplace_back(s.substr(start, pos - start));
        start = pos + 1;
    }
    return out;
}

std::vector<std::string> split_whitespace(std::string_view s)
{
    std::vector<std::string> out;
    std::size_t i = 0;
    while (i < s.size()) {
        while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i])))
            ++i;
        std::size_t start = i;
        while (i < s.size() && !std::isspace(static_cast<unsigned char>(s[i])))
            ++i;
        if (i > start)
            out.emplace_back(s.substr(start, i - start));
    }
    return out;
}

std::string join(const std::vector<std::string>& parts, std::string_view sep)
{
    std::string out;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        if (i)
            out += sep;
        out += parts[i];
    }
    return out;
}

std::string trim(std::string_view s)
{
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b])))
        ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1])))
        --e;
    return std::string(s.substr(b, e - b));
}

bool path_under(const fs::path& prefix, const fs::path& p)
{
    auto pre = prefix.lexically_normal();
    auto path = p.lexically_normal();
    auto pit = pre.begin(), pend = pre.end();
    auto it = path.begin(), end = path.end();
    // ignore a trailing empty element from "dir/" forms
    for (; pit != pend; ++pit, ++it) {
        if (pit->empty())
            continue;
        if (it == end || *it != *pit)
            return false;
    }
    return true;
}

CommandResult run_command(const std::vector<std::string>& argv,
                          const std::optional<fs::path>& workdir,
                          const std::optional<std::map<std::string, std::string>>& env)
{
    if (argv.empty())
        throw Error("run_command: empty argv");

    int pipefd[2];
    if (pipe(pipefd) != 0)
        throw Error(std::string("pipe: ") + std::strerror(errno));

    std::vector<std::string> env_strings;
    std::vector<char*> envp;
    if (env) {
        for (const auto& [k, v] : *env)
            env_strings.push_back(k + "=" + v);
        for (auto& s : env_strings)
            envp.push_back(s.data());
        envp.push_back(nullptr);
    }

    std::vector<char*> args;
    for (const auto& a : argv)
        args.push_back(const_cast<char*>(a.c_str()));
    args.push_back(nullptr);

    pid_t pid = fork();
    if (pid < 0) {
        close(pipefd[0]);
        close(pipefd[1]);
        throw Error(std::string("fork: ") + std::strerror(errno));
    }
    if (pid == 0) {
        close(pipefd[0]);
        dup2(pipefd[1], STDOUT_FILENO);
        dup2(pipefd[1], STDERR_FILENO);
        close(pipefd[1]);
        if (workdir && chdir(workdir->c_str()) != 0)
            _exit(127);
        if (env)
            execve(argv[0].c_str(), args.data(), envp.data());
        else
            execvp(argv[0].c_str(), args.data());
        _exit(127);
    }

    close(pipefd[1]);
    CommandResult result;
    char buf[4096];
    ssize_t n;
    while ((n = read(pipefd[0], buf, sizeof buf)) > 0)
        result.output.append(buf, static_cast<std::size_t>(n));
    close(pipefd[0]);

    int wstatus = 0;
    waitpid(pid, &wstatus, 0);
    if (WIFEXITED(wstatus))
        result.status = WEXITSTATUS(wstatus);
    else if (WIFSIGNALED(wstatus))
        result.status = 128 + WTERMSIG(wstatus);
    return result;
}

} // namespace garden
