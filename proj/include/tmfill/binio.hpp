#pragma once

#include <unistd.h>

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "tmfill/common.hpp"

namespace tmfill {

// Little-endian binary streams for the index/model snapshot formats.
// All integers are written LSB-first regardless of host order.

class BinWriter {
public:
    explicit BinWriter(std::ostream& os) : os_(os) {}

    void bytes(const void* p, std::size_t n) {
        os_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
        if (!os_) throw Error("write failed");
    }
    void u8(std::uint8_t v) { bytes(&v, 1); }
    void u32(std::uint32_t v) {
        unsigned char b[4];
        for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
        bytes(b, 4);
    }
    void u64(std::uint64_t v) {
        unsigned char b[8];
        for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
        bytes(b, 8);
    }
    void f64(double v) {
        std::uint64_t bits;
        std::memcpy(&bits, &v, 8);
        u64(bits);
    }
    void str(const std::string& s) {
        u32(static_cast<std::uint32_t>(s.size()));
        bytes(s.data(), s.size());
    }

private:
    std::ostream& os_;
};

class BinReader {
public:
    explicit BinReader(std::istream& is, std::string what = "file")
        : is_(is), what_(std::move(what)) {}

    void bytes(void* p, std::size_t n) {
        is_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
        if (static_cast<std::size_t>(is_.gcount()) != n)
            throw Error("truncated " + what_ + ": unexpected end of data");
    }
    std::uint8_t u8() {
        std::uint8_t v;
        bytes(&v, 1);
        return v;
    }
    std::uint32_t u32() {
        unsigned char b[4];
        bytes(b, 4);
        std::uint32_t v = 0;
        for (int i = 3; i >= 0; --i) v = (v << 8) | b[i];
        return v;
    }
    std::uint64_t u64() {
        unsigned char b[8];
        bytes(b, 8);
        std::uint64_t v = 0;
        for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
        return v;
    }
    double f64() {
        std::uint64_t bits = u64();
        double v;
        std::memcpy(&v, &bits, 8);
        return v;
    }
    std::string str(std::uint32_t max_len = 1u << 24) {
        std::uint32_t n = u32();
        if (n > max_len) throw Error("corrupt " + what_ + ": string length " + std::to_string(n));
        std::string s(n, '\0');
        if (n) bytes(s.data(), n);
        return s;
    }

private:
    std::istream& is_;
    std::string what_;
};

/// Checks an 8-byte magic string; throws a "not a ..." error on mismatch.
inline void expect_magic(BinReader& r, const char magic[8], const std::string& kind) {
    char got[8];
    r.bytes(got, 8);
    if (std::memcmp(got, magic, 8) != 0) throw Error("not a " + kind + " file (bad magic)");
}

inline void expect_version(std::uint32_t got, std::uint32_t want, const std::string& kind) {
    if (got != want)
        throw Error(kind + " version mismatch: file has v" + std::to_string(got) +
                    ", this build reads v" + std::to_string(want));
}

// Writes via a temp file in the target directory, then renames into place,
// so failed commands never leave partial outputs behind.
template <typename WriteFn>
void atomic_write_file(const std::filesystem::path& path, WriteFn&& fn, bool binary = false) {
    namespace fs = std::filesystem;
    fs::path dir = path.parent_path();
    if (!dir.empty()) fs::create_directories(dir);
    fs::path tmp = path;
    tmp += ".tmp." + std::to_string(static_cast<unsigned long>(::getpid()));
    {
        std::ofstream os(tmp, binary ? std::ios::binary | std::ios::trunc : std::ios::trunc);
        if (!os) throw Error("cannot open " + tmp.string() + " for writing");
        try {
            fn(os);
            os.flush();
            if (!os) throw Error("write failed: " + tmp.string());
        } catch (...) {
            os.close();
            std::error_code ec;
            fs::remove(tmp, ec);
            throw;
        }
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) {
        fs::remove(tmp, ec);
        throw Error("cannot rename " + tmp.string() + " to " + path.string());
    }
}

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw Error("cannot open " + path.string());
    std::string data((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    return data;
}

} // namespace tmfill
