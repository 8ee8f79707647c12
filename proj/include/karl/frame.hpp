#pragma once

// Broker <-> module-process wire format, shared by the hub and the module
// SDK. A frame is [u32 length][u8 kind][u32 header length][header JSON][blob],
// little-endian, where length counts everything after itself.

#include <cerrno>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>

#include <unistd.h>

#include <json.hpp>

namespace karl::frame {

enum Kind : char {
  kInit = 'I',
  kRead = 'R',
  kReadLastN = 'L',
  kReadEvent = 'E',
  kPush = 'P',
  kNetwork = 'N',
  kComplete = 'C',
  kFail = 'F',
  kOk = 'O',
  kError = 'X',
};

struct Frame {
  char kind = kOk;
  nlohmann::json header = nlohmann::json::object();
  std::string blob;
};

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline std::uint32_t get_u32(const char* p) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i)
    v |= static_cast<std::uint32_t>(static_cast<unsigned char>(p[i])) << (8 * i);
  return v;
}

inline std::string encode(const Frame& f) {
  std::string hdr = f.header.dump();
  std::string out;
  out.reserve(9 + hdr.size() + f.blob.size());
  put_u32(out, static_cast<std::uint32_t>(1 + 4 + hdr.size() + f.blob.size()));
  out.push_back(f.kind);
  put_u32(out, static_cast<std::uint32_t>(hdr.size()));
  out += hdr;
  out += f.blob;
  return out;
}

/// Parses the bytes after the length prefix.
inline Frame decode_body(const std::string& body) {
  if (body.size() < 5) throw std::runtime_error("short frame");
  Frame f;
  f.kind = body[0];
  auto hdr_len = get_u32(body.data() + 1);
  if (5 + static_cast<std::size_t>(hdr_len) > body.size())
    throw std::runtime_error("frame header overruns frame");
  f.header = nlohmann::json::parse(body.substr(5, hdr_len));
  f.blob = body.substr(5 + hdr_len);
  return f;
}

inline bool write_all(int fd, const std::string& data) {
  std::size_t off = 0;
  while (off < data.size()) {
    auto n = ::write(fd, data.data() + off, data.size() - off);
    if (n < 0) {
      if (errno == EINTR) continue;
      return false;
    }
    off += static_cast<std::size_t>(n);
  }
  return true;
}

inline bool read_exact(int fd, char* buf, std::size_t len) {
  std::size_t off = 0;
  while (off < len) {
    auto n = ::read(fd, buf + off, len - off);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) return false;
    off += static_cast<std::size_t>(n);
  }
  return true;
}

inline bool send(int fd, const Frame& f) { return write_all(fd, encode(f)); }

/// nullopt on a clean end of stream.
inline std::optional<Frame> receive(int fd) {
  char len_buf[4];
  if (!read_exact(fd, len_buf, 4)) return std::nullopt;
  std::string body(get_u32(len_buf), '\0');
  if (!read_exact(fd, body.data(), body.size())) throw std::runtime_error("truncated frame");
  return decode_body(body);
}

}  // namespace karl::frame
