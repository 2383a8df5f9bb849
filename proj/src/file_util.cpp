#include "attnvpr/file_util.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>
#include <system_error>

#include <unistd.h>

#include "attnvpr/error.hpp"

namespace attnvpr {

void atomic_write(const std::filesystem::path& path, std::string_view bytes) {
  std::error_code ec;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
  auto tmp = path;
  tmp += ".tmp" + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoFailure, "cannot open " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) {
      std::filesystem::remove(tmp, ec);
      throw Error(ErrorCode::IoFailure, "write failed for " + path.string());
    }
  }
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw Error(ErrorCode::IoFailure, "cannot rename into " + path.string());
  }
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return std::move(ss).str();
}

void ByteWriter::u32(std::uint32_t v) {
  for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

void ByteWriter::f32(std::span<const float> values) {
  buf_.reserve(buf_.size() + values.size() * 4);
  for (float f : values) u32(std::bit_cast<std::uint32_t>(f));
}

void ByteReader::expect_magic(std::string_view m) {
  if (bytes_.substr(0, m.size()) != m) {
    throw Error(ErrorCode::BadMagic, context_ + ": expected magic '" + std::string(m.substr(0, 4)) + "'");
  }
  pos_ = m.size();
}

std::uint32_t ByteReader::u32() {
  if (bytes_.size() - pos_ < 4) throw Error(ErrorCode::ShapeMismatch, context_ + ": truncated header");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) {
    v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
  }
  pos_ += 4;
  return v;
}

std::vector<float> ByteReader::f32_payload(std::size_t count) {
  const std::size_t remaining = bytes_.size() - pos_;
  if (remaining % 4 != 0 || remaining / 4 != count) {
    throw Error(ErrorCode::ShapeMismatch, context_ + ": payload has " + std::to_string(remaining) +
                                              " bytes, header declares " + std::to_string(count) + " floats");
  }
  std::vector<float> out(count);
  for (auto& f : out) f = std::bit_cast<float>(u32());
  return out;
}

}  // namespace attnvpr
