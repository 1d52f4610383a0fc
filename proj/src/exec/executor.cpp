#include "unitsynth/exec/executor.hpp"

#include "unitsynth/common/text.hpp"

#include <cerrno>
#include <csignal>
#include <cstring>
#include <fcntl.h>
#include <poll.h>
#include <sys/wait.h>
#include <unistd.h>

namespace unitsynth::exec {

// ---------------------------------------------------------------- stub

namespace {

int specificity(const StubExecutor::Rule& r) {
    return int(r.candidate.has_value()) + int(r.function.has_value()) + int(r.round.has_value()) +
           int(r.attempt.has_value()) + int(r.source_contains.has_value()) + int(r.test_contains.has_value());
}

template <class T>
std::optional<T> opt_field(const json& j, const char* key) {
    if (!j.contains(key) || j[key].is_null()) {
        return std::nullopt;
    }
    return j[key].get<T>();
}

} // namespace

StubExecutor::StubExecutor(std::vector<Rule> rules) : rules_(std::move(rules)) {}

StubExecutor StubExecutor::from_json(const json& script) {
    std::vector<Rule> rules;
    if (!script.contains("verdicts")) {
        return StubExecutor(std::move(rules));
    }
    if (!script["verdicts"].is_array()) {
        throw ConfigError("mock script: 'verdicts' must be an array");
    }
    for (const auto& e : script["verdicts"]) {
        Rule r;
        try {
            r.candidate = opt_field<std::string>(e, "candidate");
            r.function = opt_field<std::string>(e, "function");
            r.round = opt_field<int>(e, "round");
            r.attempt = opt_field<int>(e, "attempt");
            r.source_contains = opt_field<std::string>(e, "source_contains");
            r.test_contains = opt_field<std::string>(e, "test_contains");
            r.coverage = opt_field<double>(e, "coverage");
            r.wall_time = e.value("wall_time", 0.0);
        } catch (const json::exception& ex) {
            throw ConfigError(std::string("mock script verdict entry: ") + ex.what());
        }
        if (!e.contains("result")) {
            throw ConfigError("mock script verdict entry without 'result'");
        }
        r.result = e["result"];
        try {
            // reject bad scripts up front rather than at dispatch
            parse_wire_result(r.result, r.coverage, r.wall_time);
        } catch (const WireError& ex) {
            throw ConfigError(std::string("mock script verdict entry: ") + ex.what());
        }
        rules.push_back(std::move(r));
    }
    return StubExecutor(std::move(rules));
}

Verdict StubExecutor::run(const RunnerJob& job, const JobContext& ctx) {
    const Rule* best = nullptr;
    int best_score = -1;
    for (const auto& r : rules_) {
        if ((r.candidate && *r.candidate != ctx.candidate_id) || (r.function && *r.function != ctx.function_name) ||
            (r.round && *r.round != ctx.round) || (r.attempt && *r.attempt != ctx.attempt) ||
            (r.source_contains && job.function_source.find(*r.source_contains) == std::string::npos) ||
            (r.test_contains && job.test_source.find(*r.test_contains) == std::string::npos)) {
            continue;
        }
        const int s = specificity(r);
        if (s > best_score) {
            best = &r;
            best_score = s;
        }
    }
    if (best == nullptr) {
        throw StubLookupError("no scripted verdict for candidate '" + ctx.candidate_id + "' function '" +
                              ctx.function_name + "' round " + std::to_string(ctx.round) + " attempt " +
                              std::to_string(ctx.attempt));
    }
    json out = {{"job_id", job.job_id},
                {"result", best->result},
                {"coverage", best->coverage ? json(*best->coverage) : json(nullptr)},
                {"wall_time", best->wall_time}};
    return parse_worker_output(ordered_json::parse(out.dump()), job.job_id);
}

// ---------------------------------------------------------------- process

namespace {

constexpr size_t kMaxCapture = 16 * 1024 * 1024;

struct Pipe {
    int fd[2] = {-1, -1};
    ~Pipe() {
        for (int f : fd) {
            if (f >= 0) {
                ::close(f);
            }
        }
    }
    void close_end(int i) {
        if (fd[i] >= 0) {
            ::close(fd[i]);
            fd[i] = -1;
        }
    }
};

void set_nonblocking(int fd) { ::fcntl(fd, F_SETFL, ::fcntl(fd, F_GETFL) | O_NONBLOCK); }

std::string tail(const std::string& s, size_t n) { return s.size() <= n ? s : s.substr(s.size() - n); }

} // namespace

ProcessExecutor::ProcessExecutor(std::vector<std::string> command, std::chrono::milliseconds grace)
    : command_(std::move(command)), grace_(grace) {
    if (command_.empty()) {
        throw ConfigError("worker command is empty");
    }
    // a worker that exits before reading its job must not take us down
    std::signal(SIGPIPE, SIG_IGN);
}

Verdict ProcessExecutor::run(const RunnerJob& job, const JobContext&) {
    using clock = std::chrono::steady_clock;
    const std::string input = to_json(job).dump() + "\n";
    Pipe in, out, err;
    if (::pipe(in.fd) != 0 || ::pipe(out.fd) != 0 || ::pipe(err.fd) != 0) {
        return Verdict::error(ErrorKind::crash, std::string("pipe: ") + std::strerror(errno));
    }
    std::vector<char*> argv;
    for (auto& a : command_) {
        argv.push_back(a.data());
    }
    argv.push_back(nullptr);

    const auto start = clock::now();
    const pid_t pid = ::fork();
    if (pid < 0) {
        return Verdict::error(ErrorKind::crash, std::string("fork: ") + std::strerror(errno));
    }
    if (pid == 0) {
        ::setpgid(0, 0);
        ::dup2(in.fd[0], STDIN_FILENO);
        ::dup2(out.fd[1], STDOUT_FILENO);
        ::dup2(err.fd[1], STDERR_FILENO);
        for (int f : {in.fd[0], in.fd[1], out.fd[0], out.fd[1], err.fd[0], err.fd[1]}) {
            ::close(f);
        }
        ::execvp(argv[0], argv.data());
        ::_exit(127);
    }
    ::setpgid(pid, pid);
    in.close_end(0);
    out.close_end(1);
    err.close_end(1);
    set_nonblocking(in.fd[1]);
    set_nonblocking(out.fd[0]);
    set_nonblocking(err.fd[0]);

    const auto deadline =
        start + std::chrono::duration_cast<clock::duration>(std::chrono::duration<double>(job.timeout_seconds)) + grace_;
    std::string stdout_buf, stderr_buf;
    size_t written = 0;
    bool killed = false;
    char buf[65536];
    while (out.fd[0] >= 0 || err.fd[0] >= 0) {
        const auto now = clock::now();
        if (now >= deadline) {
            ::kill(-pid, SIGKILL);
            ::kill(pid, SIGKILL);
            killed = true;
            break;
        }
        std::vector<pollfd> fds;
        if (in.fd[1] >= 0) {
            fds.push_back({in.fd[1], POLLOUT, 0});
        }
        if (out.fd[0] >= 0) {
            fds.push_back({out.fd[0], POLLIN, 0});
        }
        if (err.fd[0] >= 0) {
            fds.push_back({err.fd[0], POLLIN, 0});
        }
        const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - now).count() + 1;
        const int rc = ::poll(fds.data(), fds.size(), static_cast<int>(std::min<long long>(left, 1000)));
        if (rc < 0 && errno != EINTR) {
            break;
        }
        for (const auto& p : fds) {
            if (p.revents == 0) {
                continue;
            }
            if (p.fd == in.fd[1]) {
                if (p.revents & (POLLERR | POLLHUP)) {
                    in.close_end(1);
                    continue;
                }
                const ssize_t n = ::write(in.fd[1], input.data() + written, input.size() - written);
                if (n > 0) {
                    written += static_cast<size_t>(n);
                } else if (n < 0 && errno != EAGAIN && errno != EINTR) {
                    in.close_end(1);
                }
                if (written == input.size()) {
                    in.close_end(1);
                }
                continue;
            }
            const bool is_out = p.fd == out.fd[0];
            std::string& sink = is_out ? stdout_buf : stderr_buf;
            const ssize_t n = ::read(p.fd, buf, sizeof(buf));
            if (n > 0) {
                if (sink.size() < kMaxCapture) {
                    sink.append(buf, static_cast<size_t>(n));
                }
            } else if (n == 0 || (errno != EAGAIN && errno != EINTR)) {
                (is_out ? out : err).close_end(0);
            }
        }
    }
    in.close_end(1);
    int status = 0;
    if (!killed) {
        // pipes closed; the worker may still be exiting
        while (true) {
            const pid_t r = ::waitpid(pid, &status, WNOHANG);
            if (r == pid) {
                break;
            }
            if (clock::now() >= deadline) {
                ::kill(-pid, SIGKILL);
                ::kill(pid, SIGKILL);
                killed = true;
                break;
            }
            ::usleep(2000);
        }
    }
    if (killed) {
        ::waitpid(pid, &status, 0);
        Verdict v = Verdict::error(ErrorKind::timeout, "worker unresponsive past timeout + grace; killed");
        v.wall_time = std::chrono::duration<double>(clock::now() - start).count();
        return v;
    }
    const double wall = std::chrono::duration<double>(clock::now() - start).count();

    // the result object is the last non-blank stdout line
    std::string_view rest(stdout_buf);
    std::string_view last_line;
    while (!rest.empty()) {
        const auto nl = rest.find('\n');
        const auto line = trim(rest.substr(0, nl));
        if (!line.empty()) {
            last_line = line;
        }
        if (nl == std::string_view::npos) {
            break;
        }
        rest.remove_prefix(nl + 1);
    }
    std::string why;
    if (!last_line.empty()) {
        try {
            Verdict v = parse_worker_output(ordered_json::parse(last_line), job.job_id);
            if (v.wall_time == 0) {
                v.wall_time = wall;
            }
            return v;
        } catch (const std::exception& e) {
            why = std::string("malformed worker output: ") + e.what();
        }
    } else {
        why = "worker produced no result object";
    }
    if (WIFSIGNALED(status)) {
        why += "; killed by signal " + std::to_string(WTERMSIG(status));
    } else if (WIFEXITED(status)) {
        why += "; exit code " + std::to_string(WEXITSTATUS(status));
    }
    if (!stderr_buf.empty()) {
        why += "\n" + tail(stderr_buf, 4000);
    }
    Verdict v = Verdict::error(ErrorKind::crash, why);
    v.wall_time = wall;
    return v;
}

} // namespace unitsynth::exec
