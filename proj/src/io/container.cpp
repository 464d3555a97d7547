#include "macdmp/container.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <iterator>

#include "macdmp/errors.hpp"

namespace macdmp::io {

static_assert(std::endian::native == std::endian::little,
              "container encoding assumes a little-endian host");

std::string_view kind_name(FileKind kind) {
  switch (kind) {
    case FileKind::kDataset:
      return "dataset";
    case FileKind::kCheckpoint:
      return "checkpoint";
    case FileKind::kTrace:
      return "trace";
  }
  return "unknown";
}

std::uint32_t crc32(std::span<const char> bytes, std::uint32_t seed) {
  uLong crc = seed;
  const auto* p = reinterpret_cast<const Bytef*>(bytes.data());
  std::size_t left = bytes.size();
  while (left > 0) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(left, 1u << 30));
    crc = ::crc32(crc, p, chunk);
    p += chunk;
    left -= chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

namespace {

template <typename T>
void append_raw(std::string& buf, T v) {
  char tmp[sizeof(T)];
  std::memcpy(tmp, &v, sizeof(T));
  buf.append(tmp, sizeof(T));
}

std::string block_bytes(std::string_view tag, std::string_view payload) {
  if (tag.size() != 4) throw DomainError("block tag must be 4 characters: '" + std::string(tag) + "'");
  std::string out;
  out.reserve(payload.size() + 16);
  out.append(tag);
  append_raw<std::uint64_t>(out, payload.size());
  out.append(payload);
  append_raw<std::uint32_t>(out, crc32(out));
  return out;
}

std::string header_bytes(FileKind kind) {
  std::string out(kMagic, 4);
  append_raw<std::uint16_t>(out, kFormatVersion);
  append_raw<std::uint16_t>(out, static_cast<std::uint16_t>(kind));
  return out;
}

}  // namespace

void ByteWriter::put_u8(std::uint8_t v) { append_raw(buf_, v); }
void ByteWriter::put_u16(std::uint16_t v) { append_raw(buf_, v); }
void ByteWriter::put_u32(std::uint32_t v) { append_raw(buf_, v); }
void ByteWriter::put_u64(std::uint64_t v) { append_raw(buf_, v); }
void ByteWriter::put_f64(double v) { append_raw(buf_, v); }

void ByteWriter::put_f64s(std::span<const double> v) {
  buf_.append(reinterpret_cast<const char*>(v.data()), v.size_bytes());
}

void ByteWriter::put_string(std::string_view s) {
  put_u32(static_cast<std::uint32_t>(s.size()));
  buf_.append(s);
}

std::string_view ByteReader::take(std::size_t n) {
  if (n > remaining()) {
    throw TruncatedFile("unexpected end of data: need " + std::to_string(n) +
                        " bytes, " + std::to_string(remaining()) + " left");
  }
  auto out = bytes_.substr(pos_, n);
  pos_ += n;
  return out;
}

namespace {
template <typename T>
T read_raw(std::string_view s) {
  T v;
  std::memcpy(&v, s.data(), sizeof(T));
  return v;
}
}  // namespace

std::uint8_t ByteReader::get_u8() { return read_raw<std::uint8_t>(take(1)); }
std::uint16_t ByteReader::get_u16() { return read_raw<std::uint16_t>(take(2)); }
std::uint32_t ByteReader::get_u32() { return read_raw<std::uint32_t>(take(4)); }
std::uint64_t ByteReader::get_u64() { return read_raw<std::uint64_t>(take(8)); }
double ByteReader::get_f64() { return read_raw<double>(take(8)); }

void ByteReader::get_f64s(std::span<double> out) {
  auto s = take(out.size_bytes());
  std::memcpy(out.data(), s.data(), s.size());
}

std::string ByteReader::get_string() {
  const auto n = get_u32();
  return std::string(take(n));
}

ContainerWriter::ContainerWriter(const std::filesystem::path& path, FileKind kind)
    : out_(path, std::ios::binary | std::ios::trunc), path_(path) {
  if (!out_) throw MissingArtifact("cannot open for writing: " + path.string());
  const auto header = header_bytes(kind);
  out_.write(header.data(), static_cast<std::streamsize>(header.size()));
}

void ContainerWriter::append(std::string_view tag, std::string_view payload) {
  if (finished_) throw DomainError("append after finish: " + path_.string());
  const auto bytes = block_bytes(tag, payload);
  out_.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

void ContainerWriter::finish() {
  if (finished_) return;
  const auto bytes = block_bytes("END!", {});
  out_.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  out_.flush();
  if (!out_) throw Error("write failed: " + path_.string());
  finished_ = true;
}

void write_container(const std::filesystem::path& path, FileKind kind,
                     const std::vector<Block>& blocks) {
  ContainerWriter writer(path, kind);
  for (const auto& b : blocks) writer.append(b.tag, b.payload);
  writer.finish();
}

std::vector<Block> parse_container(std::string_view bytes, FileKind expected) {
  if (bytes.size() < 8) throw TruncatedFile("file shorter than header");
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw SchemaError("missing MACD magic bytes");
  }
  ByteReader head(bytes.substr(4, 4));
  const auto version = head.get_u16();
  const auto kind = head.get_u16();
  if (version != kFormatVersion) {
    throw VersionMismatch("format version " + std::to_string(version) +
                          ", expected " + std::to_string(kFormatVersion));
  }
  if (kind != static_cast<std::uint16_t>(expected)) {
    throw SchemaError("file kind " + std::to_string(kind) + ", expected " +
                      std::string(kind_name(expected)));
  }

  std::vector<Block> blocks;
  std::size_t pos = 8;
  while (true) {
    if (bytes.size() - pos < 12) throw TruncatedFile("missing block header / END marker");
    const auto tag = bytes.substr(pos, 4);
    const auto size = read_raw<std::uint64_t>(bytes.substr(pos + 4, 8));
    if (size > bytes.size() - pos - 12 || bytes.size() - pos - 12 - size < 4) {
      throw TruncatedFile("block '" + std::string(tag) + "' runs past end of file");
    }
    const auto covered = bytes.substr(pos, 12 + size);
    const auto stored = read_raw<std::uint32_t>(bytes.substr(pos + 12 + size, 4));
    if (crc32(covered) != stored) {
      throw ChecksumError("CRC mismatch in block '" + std::string(tag) + "' at offset " +
                          std::to_string(pos));
    }
    pos += 12 + size + 4;
    if (tag == "END!") break;
    blocks.push_back({std::string(tag), std::string(covered.substr(12))});
  }
  if (pos != bytes.size()) throw SchemaError("trailing bytes after END marker");
  return blocks;
}

std::vector<Block> read_container(const std::filesystem::path& path, FileKind expected) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingArtifact("cannot open: " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_container(bytes, expected);
}

}  // namespace macdmp::io
