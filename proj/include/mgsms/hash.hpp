#pragma once

#include <openssl/evp.h>

#include <cstdio>
#include <memory>
#include <string>

#include "mgsms/core.hpp"

namespace mgsms {

namespace hash_detail {

struct CtxDeleter {
    void operator()(EVP_MD_CTX* c) const { EVP_MD_CTX_free(c); }
};
using CtxPtr = std::unique_ptr<EVP_MD_CTX, CtxDeleter>;

inline CtxPtr new_sha256() {
    CtxPtr ctx(EVP_MD_CTX_new());
    if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1)
        fail("sha256: context initialisation failed");
    return ctx;
}

inline std::string finish_hex(EVP_MD_CTX* ctx) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_DigestFinal_ex(ctx, digest, &len) != 1) fail("sha256: finalisation failed");
    static const char* hex = "0123456789abcdef";
    std::string out;
    out.reserve(2 * len);
    for (unsigned int i = 0; i < len; ++i) {
        out.push_back(hex[digest[i] >> 4]);
        out.push_back(hex[digest[i] & 0xf]);
    }
    return out;
}

}  // namespace hash_detail

/// SHA-256 of a memory buffer, as a lowercase hex string.
inline std::string sha256_hex(const void* data, std::size_t n) {
    auto ctx = hash_detail::new_sha256();
    if (n > 0 && EVP_DigestUpdate(ctx.get(), data, n) != 1) fail("sha256: update failed");
    return hash_detail::finish_hex(ctx.get());
}

inline std::string sha256_hex(const std::string& s) { return sha256_hex(s.data(), s.size()); }

/// SHA-256 of a file's contents, streamed in 64 KiB blocks.
inline std::string sha256_file(const std::string& path) {
    std::FILE* f = std::fopen(path.c_str(), "rb");
    if (!f) fail("sha256: cannot open '%s'", path.c_str());
    auto ctx = hash_detail::new_sha256();
    char buf[65536];
    std::size_t got;
    while ((got = std::fread(buf, 1, sizeof buf, f)) > 0)
        if (EVP_DigestUpdate(ctx.get(), buf, got) != 1) {
            std::fclose(f);
            fail("sha256: update failed on '%s'", path.c_str());
        }
    bool bad = std::ferror(f) != 0;
    std::fclose(f);
    if (bad) fail("sha256: read error on '%s'", path.c_str());
    return hash_detail::finish_hex(ctx.get());
}

}  // namespace mgsms
