#pragma once

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <cstdint>
#include <fstream>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "tmfill/common.hpp"
#include "tmfill/predictor.hpp"

namespace tmfill {

// ---------------------------------------------------------------------------
// Endpoint configuration
// ---------------------------------------------------------------------------

struct ExternalConfig {
    enum class Transport { Subprocess, Http };

    Transport transport = Transport::Subprocess;
    std::vector<std::string> command; // subprocess: argv
    std::string url;                  // http: scheme://host:port
    std::string path = "/predict";
    std::int64_t timeout_ms = 30'000; // per query
    std::uint32_t parallelism = 1;    // concurrent sub-batches

    void validate() const {
        if (transport == Transport::Subprocess && command.empty())
            throw Error("external predictor: subprocess transport needs a non-empty command");
        if (transport == Transport::Http && url.empty())
            throw Error("external predictor: http transport needs a url");
        if (parallelism < 1) throw Error("external predictor: parallelism must be >= 1");
    }

    static ExternalConfig from_json(const nlohmann::json& j) {
        ExternalConfig c;
        std::string transport = j.value("transport", "subprocess");
        if (transport == "subprocess")
            c.transport = Transport::Subprocess;
        else if (transport == "http")
            c.transport = Transport::Http;
        else
            throw Error("external predictor: unknown transport '" + transport + "'");
        if (j.contains("command")) c.command = j.at("command").get<std::vector<std::string>>();
        c.url = j.value("url", "");
        c.path = j.value("path", "/predict");
        c.timeout_ms = j.value("timeout_ms", std::int64_t{30'000});
        c.parallelism = j.value("parallelism", 1u);
        c.validate();
        return c;
    }

    static ExternalConfig load_file(const std::string& path) {
        std::ifstream is(path);
        if (!is) throw Error("cannot open endpoint config " + path);
        nlohmann::json j = nlohmann::json::parse(is, nullptr, false);
        if (j.is_discarded()) throw Error("endpoint config " + path + " is not valid JSON");
        return from_json(j);
    }
};

// ---------------------------------------------------------------------------
// Wire protocol
// ---------------------------------------------------------------------------
// One JSON object per line, both directions:
//   request:  {"id":int,"left":str,"right":str,"masked_segment":[str...],
//              "hole_index":int,"tu_source":str,"k":int}
//   response: {"id":int,"candidates":[{"token":str,"score":float}...]}
//          or {"id":int,"error":str}
// Responses may arrive in any order. Unknown ids are ignored with a warning;
// a duplicated id marks that query as errored.

inline std::string query_to_wire(const HoleQuery& q, std::size_t k) {
    nlohmann::json j;
    j["id"] = q.id;
    j["left"] = q.left;
    j["right"] = q.right;
    j["masked_segment"] = q.masked_segment;
    j["hole_index"] = q.hole_index;
    j["tu_source"] = q.tu_source;
    j["k"] = k;
    return j.dump();
}

struct BatchWarnings {
    std::size_t unknown_ids = 0;
    std::size_t malformed_lines = 0;
};

namespace detail {

class ResponseCollector {
public:
    ResponseCollector(std::span<const HoleQuery> queries) : results_(queries.size()) {
        for (std::size_t i = 0; i < queries.size(); ++i) index_[queries[i].id] = i;
    }

    void feed_line(std::string_view line) {
        if (line.empty()) return;
        nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.is_object() || !j.contains("id") ||
            !j.at("id").is_number_integer()) {
            ++warnings_.malformed_lines;
            return;
        }
        auto id = j.at("id").get<std::int64_t>();
        auto it = index_.find(static_cast<std::uint32_t>(id));
        if (id < 0 || it == index_.end()) {
            ++warnings_.unknown_ids;
            return;
        }
        auto& slot = results_[it->second];
        if (slot.has_value()) {
            slot = PredictionResult{{}, "duplicate response for id " + std::to_string(id)};
            return;
        }
        PredictionResult r;
        if (j.contains("error") && j.at("error").is_string()) {
            r.error = j.at("error").get<std::string>();
        } else if (j.contains("candidates") && j.at("candidates").is_array()) {
            bool bad = false;
            for (const auto& cj : j.at("candidates")) {
                if (!cj.is_object() || !cj.contains("token") || !cj.at("token").is_string()) {
                    bad = true;
                    break;
                }
                PredictionCandidate c;
                c.token = cj.at("token").get<std::string>();
                c.score = cj.value("score", 0.0);
                r.candidates.push_back(std::move(c));
            }
            if (bad) r = PredictionResult{{}, "malformed candidate list"};
        } else {
            r.error = "response carries neither candidates nor error";
        }
        slot = std::move(r);
    }

    bool complete() const {
        for (const auto& s : results_)
            if (!s.has_value()) return false;
        return true;
    }

    /// Final per-query results; unanswered queries get `fallback_error`.
    std::vector<PredictionResult> finish(const std::string& fallback_error) {
        std::vector<PredictionResult> out;
        out.reserve(results_.size());
        for (auto& s : results_)
            out.push_back(s.has_value() ? std::move(*s)
                                        : PredictionResult{{}, fallback_error});
        return out;
    }

    const BatchWarnings& warnings() const { return warnings_; }

private:
    std::vector<std::optional<PredictionResult>> results_;
    std::unordered_map<std::uint32_t, std::size_t> index_;
    BatchWarnings warnings_;
};

inline void ignore_sigpipe_once() {
    static std::once_flag flag;
    std::call_once(flag, [] { ::signal(SIGPIPE, SIG_IGN); });
}

inline void set_nonblocking(int fd) { ::fcntl(fd, F_SETFL, O_NONBLOCK); }

// Spawns argv with piped stdin/stdout (stderr inherited), writes all request
// lines, reads response lines until every query is answered, EOF, or the
// deadline. The child is always reaped.
inline std::vector<PredictionResult> subprocess_batch(const ExternalConfig& cfg,
                                                      std::span<const HoleQuery> queries,
                                                      std::size_t k, BatchWarnings* warn_out) {
    ignore_sigpipe_once();

    std::string request_buf;
    for (const auto& q : queries) {
        request_buf += query_to_wire(q, k);
        request_buf += '\n';
    }

    int to_child[2], from_child[2];
    if (::pipe(to_child) != 0 || ::pipe(from_child) != 0)
        throw Error("external predictor: pipe() failed");
    pid_t pid = ::fork();
    if (pid < 0) throw Error("external predictor: fork() failed");
    if (pid == 0) {
        ::dup2(to_child[0], STDIN_FILENO);
        ::dup2(from_child[1], STDOUT_FILENO);
        ::close(to_child[0]);
        ::close(to_child[1]);
        ::close(from_child[0]);
        ::close(from_child[1]);
        std::vector<char*> argv;
        for (const auto& a : cfg.command) argv.push_back(const_cast<char*>(a.c_str()));
        argv.push_back(nullptr);
        ::execvp(argv[0], argv.data());
        ::_exit(127);
    }
    ::close(to_child[0]);
    ::close(from_child[1]);
    int wfd = to_child[1], rfd = from_child[0];
    set_nonblocking(wfd);
    set_nonblocking(rfd);

    ResponseCollector collector(queries);
    const auto deadline =
        std::chrono::steady_clock::now() + std::chrono::milliseconds(cfg.timeout_ms);
    std::size_t written = 0;
    std::string read_buf;
    bool timed_out = false;

    while (!collector.complete()) {
        auto now = std::chrono::steady_clock::now();
        if (now >= deadline) {
            timed_out = true;
            break;
        }
        struct pollfd fds[2];
        int nfds = 0;
        int widx = -1, ridx = -1;
        if (wfd >= 0) {
            widx = nfds;
            fds[nfds++] = {wfd, POLLOUT, 0};
        }
        ridx = nfds;
        fds[nfds++] = {rfd, POLLIN, 0};
        int remain_ms = static_cast<int>(
            std::chrono::duration_cast<std::chrono::milliseconds>(deadline - now).count());
        int rc = ::poll(fds, static_cast<nfds_t>(nfds), std::max(1, remain_ms));
        if (rc < 0) {
            if (errno == EINTR) continue;
            break;
        }
        if (rc == 0) continue;

        if (widx >= 0 && (fds[widx].revents & (POLLOUT | POLLERR | POLLHUP))) {
            if (fds[widx].revents & (POLLERR | POLLHUP)) {
                ::close(wfd);
                wfd = -1;
            } else {
                ssize_t n = ::write(wfd, request_buf.data() + written,
                                    std::min<std::size_t>(request_buf.size() - written, 65536));
                if (n > 0) written += static_cast<std::size_t>(n);
                if (n < 0 && errno != EAGAIN && errno != EINTR) {
                    ::close(wfd);
                    wfd = -1;
                }
                if (written == request_buf.size()) {
                    ::close(wfd); // EOF tells the backend the batch is done
                    wfd = -1;
                }
            }
        }
        if (fds[ridx].revents & (POLLIN | POLLHUP | POLLERR)) {
            char chunk[65536];
            ssize_t n = ::read(rfd, chunk, sizeof chunk);
            if (n > 0) {
                read_buf.append(chunk, static_cast<std::size_t>(n));
                std::size_t start = 0, nl;
                while ((nl = read_buf.find('\n', start)) != std::string::npos) {
                    collector.feed_line(std::string_view(read_buf).substr(start, nl - start));
                    start = nl + 1;
                }
                read_buf.erase(0, start);
            } else if (n == 0) {
                break; // backend closed stdout
            } else if (errno != EAGAIN && errno != EINTR) {
                break;
            }
        }
    }
    if (!read_buf.empty()) collector.feed_line(read_buf);

    if (wfd >= 0) ::close(wfd);
    ::close(rfd);
    int status = 0;
    if (::waitpid(pid, &status, WNOHANG) == 0) {
        ::kill(pid, SIGKILL);
        ::waitpid(pid, &status, 0);
    }

    if (warn_out) *warn_out = collector.warnings();
    return collector.finish(timed_out
                                ? "timeout after " + std::to_string(cfg.timeout_ms) + " ms"
                                : "no response from backend");
}

inline std::vector<PredictionResult> http_batch(const ExternalConfig& cfg,
                                                std::span<const HoleQuery> queries, std::size_t k,
                                                BatchWarnings* warn_out) {
    std::string body;
    for (const auto& q : queries) {
        body += query_to_wire(q, k);
        body += '\n';
    }
    ResponseCollector collector(queries);

    httplib::Client client(cfg.url);
    const time_t secs = static_cast<time_t>(cfg.timeout_ms / 1000);
    const time_t usecs = static_cast<time_t>((cfg.timeout_ms % 1000) * 1000);
    client.set_connection_timeout(secs, usecs);
    client.set_read_timeout(secs, usecs);
    client.set_write_timeout(secs, usecs);

    auto res = client.Post(cfg.path, body, "application/x-ndjson");
    std::string fallback;
    if (!res) {
        fallback = "http request failed: " + httplib::to_string(res.error());
    } else if (res->status != 200) {
        fallback = "http status " + std::to_string(res->status);
    } else {
        std::size_t start = 0, nl;
        const std::string& text = res->body;
        while (start < text.size()) {
            nl = text.find('\n', start);
            if (nl == std::string::npos) nl = text.size();
            collector.feed_line(std::string_view(text).substr(start, nl - start));
            start = nl + 1;
        }
        fallback = "no response from backend";
    }
    if (warn_out) *warn_out = collector.warnings();
    return collector.finish(fallback);
}

} // namespace detail

// ---------------------------------------------------------------------------
// Batch entry point and predictor adapter
// ---------------------------------------------------------------------------

/// Runs a query batch against an external backend, splitting it into up to
/// `parallelism` concurrent sub-batches. Results line up with `queries`.
inline std::vector<PredictionResult> external_predict_batch(const ExternalConfig& cfg,
                                                            std::span<const HoleQuery> queries,
                                                            std::size_t k,
                                                            BatchWarnings* warn_out = nullptr) {
    cfg.validate();
    if (queries.empty()) return {};

    auto run_one = [&](std::span<const HoleQuery> part, BatchWarnings* warn) {
        return cfg.transport == ExternalConfig::Transport::Subprocess
                   ? detail::subprocess_batch(cfg, part, k, warn)
                   : detail::http_batch(cfg, part, k, warn);
    };

    if (cfg.parallelism <= 1 || queries.size() <= 1) {
        return run_one(queries, warn_out);
    }

    const std::size_t shards = std::min<std::size_t>(cfg.parallelism, queries.size());
    const std::size_t per = (queries.size() + shards - 1) / shards;
    std::vector<std::vector<PredictionResult>> parts(shards);
    std::vector<BatchWarnings> warns(shards);
    std::vector<std::thread> threads;
    for (std::size_t s = 0; s < shards; ++s) {
        std::size_t lo = s * per, hi = std::min(queries.size(), lo + per);
        if (lo >= hi) break;
        threads.emplace_back([&, s, lo, hi] {
            parts[s] = run_one(queries.subspan(lo, hi - lo), &warns[s]);
        });
    }
    for (auto& t : threads) t.join();

    std::vector<PredictionResult> out;
    out.reserve(queries.size());
    BatchWarnings total;
    for (std::size_t s = 0; s < shards; ++s) {
        for (auto& r : parts[s]) out.push_back(std::move(r));
        total.unknown_ids += warns[s].unknown_ids;
        total.malformed_lines += warns[s].malformed_lines;
    }
    if (warn_out) *warn_out = total;
    return out;
}

/// Predictor facade over an external endpoint. Candidates are sanitized to
/// single tokens; multi-token answers are truncated and flagged.
class ExternalPredictor : public Predictor {
public:
    explicit ExternalPredictor(ExternalConfig cfg, TokenizerConfig tok = {})
        : cfg_(std::move(cfg)), tok_(std::move(tok)) {
        cfg_.validate();
    }

    std::string name() const override { return "external"; }

    std::vector<PredictionCandidate> predict(const HoleQuery& query, std::size_t k) override {
        auto results = predict_batch({&query, 1}, k);
        if (results.at(0).error) throw Error(*results[0].error);
        return std::move(results[0].candidates);
    }

    std::vector<PredictionResult> predict_batch(std::span<const HoleQuery> queries,
                                                std::size_t k) override {
        auto results = external_predict_batch(cfg_, queries, k, &warnings_);
        for (auto& r : results) {
            if (r.error) continue;
            std::vector<PredictionCandidate> clean;
            for (const auto& c : r.candidates) {
                if (auto ok = sanitize_candidate(c.token, c.score, tok_)) clean.push_back(*ok);
                if (clean.size() == k) break;
            }
            r.candidates = std::move(clean);
        }
        return results;
    }

    const BatchWarnings& last_warnings() const { return warnings_; }

private:
    ExternalConfig cfg_;
    TokenizerConfig tok_;
    BatchWarnings warnings_;
};

} // namespace tmfill
