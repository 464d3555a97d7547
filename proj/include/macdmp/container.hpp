#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace macdmp::io {

// On-disk layout, little-endian throughout:
//
//   "MACD" | u16 version | u16 kind | block* | "END!" block
//   block := tag[4] | u64 payload_size | payload | u32 crc32(tag, size, payload)
//
// Datasets, traces and checkpoints all use this container.
inline constexpr char kMagic[4] = {'M', 'A', 'C', 'D'};
inline constexpr std::uint16_t kFormatVersion = 1;

enum class FileKind : std::uint16_t { kDataset = 1, kCheckpoint = 2, kTrace = 3 };

std::string_view kind_name(FileKind kind);

std::uint32_t crc32(std::span<const char> bytes, std::uint32_t seed = 0);

class ByteWriter {
 public:
  void put_u8(std::uint8_t v);
  void put_u16(std::uint16_t v);
  void put_u32(std::uint32_t v);
  void put_u64(std::uint64_t v);
  void put_i64(std::int64_t v) { put_u64(static_cast<std::uint64_t>(v)); }
  void put_f64(double v);
  void put_f64s(std::span<const double> v);
  void put_string(std::string_view s);

  const std::string& bytes() const { return buf_; }
  std::string take() { return std::move(buf_); }

 private:
  std::string buf_;
};

// Bounds-checked reader; any overrun raises TruncatedFile.
class ByteReader {
 public:
  explicit ByteReader(std::string_view bytes) : bytes_(bytes) {}

  std::uint8_t get_u8();
  std::uint16_t get_u16();
  std::uint32_t get_u32();
  std::uint64_t get_u64();
  std::int64_t get_i64() { return static_cast<std::int64_t>(get_u64()); }
  double get_f64();
  void get_f64s(std::span<double> out);
  std::string get_string();

  bool at_end() const { return pos_ == bytes_.size(); }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  std::string_view take(std::size_t n);

  std::string_view bytes_;
  std::size_t pos_ = 0;
};

struct Block {
  std::string tag;  // exactly four ASCII characters
  std::string payload;
};

// Streaming writer: header on open, one block per append, terminator on
// finish(). Destruction without finish() leaves a file that reads as
// truncated.
class ContainerWriter {
 public:
  ContainerWriter(const std::filesystem::path& path, FileKind kind);
  ContainerWriter(const ContainerWriter&) = delete;
  ContainerWriter& operator=(const ContainerWriter&) = delete;

  void append(std::string_view tag, std::string_view payload);
  void finish();

 private:
  std::ofstream out_;
  std::filesystem::path path_;
  bool finished_ = false;
};

void write_container(const std::filesystem::path& path, FileKind kind,
                     const std::vector<Block>& blocks);

// Validates magic, version, kind and every block checksum.
std::vector<Block> read_container(const std::filesystem::path& path,
                                  FileKind expected);

std::vector<Block> parse_container(std::string_view bytes, FileKind expected);

}  // namespace macdmp::io
