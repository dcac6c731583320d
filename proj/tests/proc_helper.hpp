#pragma once

#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cstdio>
#include <string>
#include <vector>

#include "tmfill/common.hpp"

namespace testutil {

/// Spawns a child with piped stdout and kills it on destruction. Used to run
/// the echo backend's HTTP mode from tests.
class ChildServer {
public:
    explicit ChildServer(std::vector<std::string> argv) {
        int out_pipe[2];
        if (::pipe(out_pipe) != 0) throw tmfill::Error("pipe failed");
        pid_ = ::fork();
        if (pid_ < 0) throw tmfill::Error("fork failed");
        if (pid_ == 0) {
            ::dup2(out_pipe[1], STDOUT_FILENO);
            ::close(out_pipe[0]);
            ::close(out_pipe[1]);
            std::vector<char*> cargv;
            for (auto& a : argv) cargv.push_back(a.data());
            cargv.push_back(nullptr);
            ::execv(cargv[0], cargv.data());
            ::_exit(127);
        }
        ::close(out_pipe[1]);
        out_fd_ = out_pipe[0];
    }

    /// Reads stdout until a newline (blocking).
    std::string read_line() {
        std::string line;
        char c;
        while (::read(out_fd_, &c, 1) == 1) {
            if (c == '\n') break;
            line.push_back(c);
        }
        return line;
    }

    /// Parses "LISTENING <port>".
    int wait_for_port() {
        std::string line = read_line();
        auto pos = line.find("LISTENING ");
        if (pos == std::string::npos)
            throw tmfill::Error("server did not announce a port: '" + line + "'");
        return std::stoi(line.substr(pos + 10));
    }

    ~ChildServer() {
        if (out_fd_ >= 0) ::close(out_fd_);
        if (pid_ > 0) {
            ::kill(pid_, SIGKILL);
            int status = 0;
            ::waitpid(pid_, &status, 0);
        }
    }

private:
    pid_t pid_ = -1;
    int out_fd_ = -1;
};

} // namespace testutil
