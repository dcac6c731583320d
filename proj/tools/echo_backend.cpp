// Test backend speaking the tmfill external-predictor wire protocol. Answers
// every request with its left anchor. Flags simulate misbehaving backends:
// dropped/duplicated/unknown ids, shuffled response order, multi-token
// answers, error responses, or hanging without answering.

#include <chrono>
#include <cstdint>
#include <iostream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <httplib.h>
#include <json.hpp>

#include "tmfill/rng.hpp"

namespace {

struct Behavior {
    std::int64_t drop_id = -1;
    std::int64_t duplicate_id = -1;
    std::int64_t error_id = -1;
    bool unknown_id = false;
    bool multi_token = false;
    bool hang = false;
    std::int64_t shuffle_seed = -1;
    double score = 1.0;
};

std::vector<std::string> respond(const std::vector<std::string>& request_lines,
                                 const Behavior& b) {
    std::vector<std::string> out;
    for (const auto& line : request_lines) {
        if (line.empty()) continue;
        auto j = nlohmann::json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.contains("id")) continue;
        std::int64_t id = j.at("id").get<std::int64_t>();
        if (id == b.drop_id) continue;
        nlohmann::json r;
        r["id"] = id;
        if (id == b.error_id) {
            r["error"] = "synthetic backend error";
        } else {
            std::string token = j.value("left", "");
            if (b.multi_token) token += " extra words";
            r["candidates"] = nlohmann::json::array({{{"token", token}, {"score", b.score}}});
        }
        out.push_back(r.dump());
        if (id == b.duplicate_id) out.push_back(r.dump());
    }
    if (b.unknown_id) {
        nlohmann::json r;
        r["id"] = 999'999'999;
        r["candidates"] = nlohmann::json::array({{{"token", "ghost"}, {"score", 0.0}}});
        out.push_back(r.dump());
    }
    if (b.shuffle_seed >= 0) {
        tmfill::Pcg32 rng(static_cast<std::uint64_t>(b.shuffle_seed));
        tmfill::fisher_yates_shuffle(out, rng);
    }
    return out;
}

int run_stdin_mode(const Behavior& b) {
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(std::cin, line)) lines.push_back(line);
    if (b.hang) {
        std::this_thread::sleep_for(std::chrono::hours(1));
        return 0;
    }
    for (const auto& r : respond(lines, b)) std::cout << r << '\n';
    std::cout.flush();
    return 0;
}

int run_http_mode(const Behavior& b, int port, int max_requests) {
    httplib::Server server;
    int served = 0;
    server.Post("/predict", [&](const httplib::Request& req, httplib::Response& res) {
        if (b.hang) std::this_thread::sleep_for(std::chrono::hours(1));
        std::vector<std::string> lines;
        std::size_t start = 0;
        while (start < req.body.size()) {
            std::size_t nl = req.body.find('\n', start);
            if (nl == std::string::npos) nl = req.body.size();
            lines.push_back(req.body.substr(start, nl - start));
            start = nl + 1;
        }
        std::string body;
        for (const auto& r : respond(lines, b)) {
            body += r;
            body += '\n';
        }
        res.set_content(body, "application/x-ndjson");
        if (max_requests > 0 && ++served >= max_requests) server.stop();
    });

    int bound = port;
    if (port == 0) {
        bound = server.bind_to_any_port("127.0.0.1");
        if (bound <= 0) {
            std::cerr << "error: cannot bind a port\n";
            return 1;
        }
    } else if (!server.bind_to_port("127.0.0.1", port)) {
        std::cerr << "error: cannot bind port " << port << "\n";
        return 1;
    }
    std::cout << "LISTENING " << bound << std::endl; // parsed by callers
    server.listen_after_bind();
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"echo backend for the tmfill external-predictor protocol"};
    Behavior b;
    bool serve = false;
    int port = 0;
    int max_requests = 0;
    app.add_flag("--serve", serve, "serve HTTP on /predict instead of stdin/stdout");
    app.add_option("--port", port, "HTTP port (0 picks a free one)");
    app.add_option("--max-requests", max_requests, "exit after N HTTP requests (0 = run forever)");
    app.add_option("--drop-id", b.drop_id, "omit the response for this id");
    app.add_option("--duplicate-id", b.duplicate_id, "answer this id twice");
    app.add_option("--error-id", b.error_id, "answer this id with an error object");
    app.add_flag("--unknown-id", b.unknown_id, "emit one response with an id nobody asked for");
    app.add_flag("--multi-token", b.multi_token, "answer with several words instead of one");
    app.add_flag("--hang", b.hang, "read requests but never answer");
    app.add_option("--shuffle", b.shuffle_seed, "shuffle response order with this seed");
    app.add_option("--score", b.score, "score attached to every candidate");
    CLI11_PARSE(app, argc, argv);

    return serve ? run_http_mode(b, port, max_requests) : run_stdin_mode(b);
}
