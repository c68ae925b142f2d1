#include "curator/subprocess.hpp"

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

#include <array>
#include <cerrno>
#include <cstring>
#include <utility>

extern char** environ;

namespace curator {

namespace {

class Fd {
public:
    Fd() = default;
    explicit Fd(int fd) : fd_(fd) {}
    ~Fd() { reset(); }
    Fd(Fd&& o) noexcept : fd_(o.release()) {}
    Fd& operator=(Fd&& o) noexcept {
        if (this != &o) {
            reset();
            fd_ = o.release();
        }
        return *this;
    }
    int get() const { return fd_; }
    int release() { return std::exchange(fd_, -1); }
    void reset() {
        if (fd_ >= 0) ::close(fd_);
        fd_ = -1;
    }

private:
    int fd_ = -1;
};

bool make_pipe(Fd& r, Fd& w) {
    int p[2];
    if (::pipe2(p, O_CLOEXEC) != 0) return false;
    r = Fd(p[0]);
    w = Fd(p[1]);
    return true;
}

int decode_status(int status) {
    if (WIFEXITED(status)) return WEXITSTATUS(status);
    if (WIFSIGNALED(status)) return -WTERMSIG(status);
    return -1;
}

}  // namespace

ProcessOutcome run_process(const std::vector<std::string>& argv, std::string_view input,
                           std::chrono::milliseconds timeout) {
    ProcessOutcome out;
    if (argv.empty()) {
        out.spawn_error = "empty command";
        return out;
    }

    Fd in_r, in_w, out_r, out_w;
    if (!make_pipe(in_r, in_w) || !make_pipe(out_r, out_w)) {
        out.spawn_error = std::string("pipe: ") + std::strerror(errno);
        return out;
    }

    posix_spawn_file_actions_t actions;
    posix_spawn_file_actions_init(&actions);
    posix_spawn_file_actions_adddup2(&actions, in_r.get(), STDIN_FILENO);
    posix_spawn_file_actions_adddup2(&actions, out_w.get(), STDOUT_FILENO);

    std::vector<char*> args;
    args.reserve(argv.size() + 1);
    for (const auto& a : argv) args.push_back(const_cast<char*>(a.c_str()));
    args.push_back(nullptr);

    // Writing to a child that already exited must not kill us.
    ::signal(SIGPIPE, SIG_IGN);

    pid_t pid = -1;
    int rc = ::posix_spawnp(&pid, args[0], &actions, nullptr, args.data(), environ);
    posix_spawn_file_actions_destroy(&actions);
    if (rc != 0) {
        out.spawn_error = argv[0] + ": " + std::strerror(rc);
        return out;
    }
    out.spawned = true;
    in_r.reset();
    out_w.reset();

    ::fcntl(in_w.get(), F_SETFL, ::fcntl(in_w.get(), F_GETFL) | O_NONBLOCK);
    ::fcntl(out_r.get(), F_SETFL, ::fcntl(out_r.get(), F_GETFL) | O_NONBLOCK);

    const auto deadline = std::chrono::steady_clock::now() + timeout;
    std::size_t written = 0;
    if (input.empty()) in_w.reset();
    std::string pending;
    std::array<char, 65536> buf;
    bool eof = false;

    while (!eof) {
        const auto now = std::chrono::steady_clock::now();
        if (now >= deadline) {
            out.timed_out = true;
            break;
        }
        const auto wait_ms = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - now);
        std::array<pollfd, 2> fds{};
        nfds_t nfds = 0;
        fds[nfds++] = {out_r.get(), POLLIN, 0};
        if (in_w.get() >= 0) fds[nfds++] = {in_w.get(), POLLOUT, 0};
        int pr = ::poll(fds.data(), nfds, static_cast<int>(std::max<long long>(1, wait_ms.count())));
        if (pr < 0) {
            if (errno == EINTR) continue;
            break;
        }
        if (nfds > 1 && (fds[1].revents & (POLLOUT | POLLERR | POLLHUP))) {
            ssize_t n = ::write(in_w.get(), input.data() + written, input.size() - written);
            if (n > 0) written += static_cast<std::size_t>(n);
            if ((n < 0 && errno != EAGAIN && errno != EINTR) || written == input.size()) in_w.reset();
        }
        if (fds[0].revents & (POLLIN | POLLHUP | POLLERR)) {
            for (;;) {
                ssize_t n = ::read(out_r.get(), buf.data(), buf.size());
                if (n > 0) {
                    pending.append(buf.data(), static_cast<std::size_t>(n));
                    continue;
                }
                if (n == 0) eof = true;
                break;
            }
            std::size_t start = 0;
            for (std::size_t nl; (nl = pending.find('\n', start)) != std::string::npos; start = nl + 1) {
                std::string line = pending.substr(start, nl - start);
                if (!line.empty() && line.back() == '\r') line.pop_back();
                out.lines.push_back(std::move(line));
            }
            pending.erase(0, start);
        }
    }

    in_w.reset();
    out_r.reset();
    int status = 0;
    if (out.timed_out) {
        ::kill(pid, SIGKILL);
        ::waitpid(pid, &status, 0);
    } else {
        // Stdout is closed; give the child until the deadline to exit.
        for (;;) {
            pid_t r = ::waitpid(pid, &status, WNOHANG);
            if (r == pid || (r < 0 && errno != EINTR)) break;
            if (std::chrono::steady_clock::now() >= deadline) {
                out.timed_out = true;
                ::kill(pid, SIGKILL);
                ::waitpid(pid, &status, 0);
                break;
            }
            ::usleep(1000);
        }
    }
    out.exit_status = decode_status(status);
    return out;
}

}  // namespace curator
