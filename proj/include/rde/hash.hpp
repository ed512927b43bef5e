#pragma once

#include <cstdio>
#include <memory>
#include <string>
#include <string_view>

#include <openssl/evp.h>

#include "rde/error.hpp"

namespace rde {

namespace detail {
inline std::string hex(const unsigned char* p, unsigned n) {
  static const char* digits = "0123456789abcdef";
  std::string s;
  for (unsigned k = 0; k < n; ++k) {
    s += digits[p[k] >> 4];
    s += digits[p[k] & 15];
  }
  return s;
}

struct Sha256 {
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx{EVP_MD_CTX_new(), &EVP_MD_CTX_free};
  Sha256() {
    if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1) throw Error("sha256: init failed");
  }
  void update(const void* data, std::size_t n) {
    if (EVP_DigestUpdate(ctx.get(), data, n) != 1) throw Error("sha256: update failed");
  }
  std::string finish() {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned n = 0;
    if (EVP_DigestFinal_ex(ctx.get(), md, &n) != 1) throw Error("sha256: final failed");
    return hex(md, n);
  }
};
}  // namespace detail

inline std::string sha256(std::string_view data) {
  detail::Sha256 h;
  h.update(data.data(), data.size());
  return h.finish();
}

inline std::string sha256_file(const std::string& path) {
  std::unique_ptr<std::FILE, decltype(&std::fclose)> f(std::fopen(path.c_str(), "rb"), &std::fclose);
  if (!f) throw StageInputError("cannot read '" + path + "'");
  detail::Sha256 h;
  char buf[1 << 16];
  std::size_t n;
  while ((n = std::fread(buf, 1, sizeof buf, f.get())) > 0) h.update(buf, n);
  return h.finish();
}

}  // namespace rde
