#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace attnvpr {

/// Writes to a sibling temp file and renames it over `path`, so readers never
/// observe a partially written file.
void atomic_write(const std::filesystem::path& path, std::string_view bytes);

std::string read_file(const std::filesystem::path& path);

/// Little-endian encoder for the FMAP/AMAT/LFT/VDB/AMP containers.
class ByteWriter {
 public:
  void magic(std::string_view m) { buf_.append(m); }
  void u32(std::uint32_t v);
  void f32(std::span<const float> values);
  const std::string& bytes() const noexcept { return buf_; }

 private:
  std::string buf_;
};

class ByteReader {
 public:
  ByteReader(std::string_view bytes, std::string context)
      : bytes_(bytes), context_(std::move(context)) {}

  /// Throws BadMagic when the prefix differs.
  void expect_magic(std::string_view m);
  std::uint32_t u32();
  /// Reads exactly `count` floats and requires the payload to end there.
  std::vector<float> f32_payload(std::size_t count);

 private:
  std::string_view bytes_;
  std::size_t pos_ = 0;
  std::string context_;
};

}  // namespace attnvpr
