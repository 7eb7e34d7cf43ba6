#include "histsumm/hashing.hpp"

#include "histsumm/error.hpp"

#include <array>
#include <fstream>
#include <memory>

#include <openssl/evp.h>

namespace histsumm {

namespace {

struct DigestContext {
    std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx{EVP_MD_CTX_new(), &EVP_MD_CTX_free};

    DigestContext() {
        if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1) throw Error("sha256: init failed");
    }
    void update(const void* data, std::size_t n) {
        if (EVP_DigestUpdate(ctx.get(), data, n) != 1) throw Error("sha256: update failed");
    }
    std::string hex() {
        std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
        unsigned int len = 0;
        if (EVP_DigestFinal_ex(ctx.get(), md.data(), &len) != 1) throw Error("sha256: final failed");
        static constexpr char digits[] = "0123456789abcdef";
        std::string out;
        out.reserve(2 * len);
        for (unsigned i = 0; i < len; ++i) {
            out.push_back(digits[md[i] >> 4]);
            out.push_back(digits[md[i] & 0xF]);
        }
        return out;
    }
};

}  // namespace

std::string sha256_hex(std::string_view bytes) {
    DigestContext d;
    d.update(bytes.data(), bytes.size());
    return d.hex();
}

std::string sha256_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("sha256: cannot open '" + path.string() + "'");
    DigestContext d;
    std::array<char, 1 << 16> buf{};
    while (in) {
        in.read(buf.data(), buf.size());
        if (in.gcount() > 0) d.update(buf.data(), static_cast<std::size_t>(in.gcount()));
    }
    return d.hex();
}

}  // namespace histsumm
