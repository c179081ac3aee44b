#pragma once

#include <array>
#include <cstdint>
#include <fstream>
#include <istream>
#include <iterator>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "qkdlink/error.hpp"

namespace qkdlink {

/// Detector channel map, identical on both ends of the link.
enum Channel : std::uint8_t {
  kChannelH = 0,
  kChannelV = 1,
  kChannelD = 2,
  kChannelA = 3,
  kChannelBeacon = 4,  // health-check / beacon detector
};

inline constexpr std::uint8_t kMaxChannels = 8;
inline constexpr std::uint8_t kFlagBeacon = 0x01;
inline constexpr std::size_t kRecordBytes = 16;

struct TimestampRecord {
  std::uint64_t time_ps = 0;
  std::uint8_t channel = 0;
  std::uint8_t flags = 0;

  bool is_beacon() const { return (flags & kFlagBeacon) != 0; }
  /// Photon detection on one of the four polarization channels.
  bool is_photon() const { return channel < kChannelBeacon && !is_beacon(); }
  int basis() const { return channel / 2; }    // 0 = H/V, 1 = D/A
  int outcome() const { return channel % 2; }  // 0 = H or D
  bool operator==(const TimestampRecord&) const = default;
};

using TimestampStream = std::vector<TimestampRecord>;

// Wire format: 16-byte records, u64 little-endian time_ps, u8 channel, u8 flags,
// 6 reserved zero bytes.

inline std::array<std::uint8_t, kRecordBytes> encode_record(const TimestampRecord& r) {
  std::array<std::uint8_t, kRecordBytes> b{};
  for (int i = 0; i < 8; ++i) b[i] = static_cast<std::uint8_t>(r.time_ps >> (8 * i));
  b[8] = r.channel;
  b[9] = r.flags;
  return b;
}

inline TimestampRecord decode_record(std::span<const std::uint8_t, kRecordBytes> b) {
  TimestampRecord r;
  for (int i = 0; i < 8; ++i) r.time_ps |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  r.channel = b[8];
  r.flags = b[9];
  return r;
}

/// Throws ParseError on unknown channel or a decreasing timestamp.
inline void check_stream(std::span<const TimestampRecord> s) {
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i].channel >= kMaxChannels) throw ParseError("unknown channel " + std::to_string(s[i].channel) + " at index " + std::to_string(i));
    if (i > 0 && s[i].time_ps < s[i - 1].time_ps) throw ParseError("unsorted at index " + std::to_string(i));
  }
}

inline void write_timestamps(std::ostream& out, std::span<const TimestampRecord> s) {
  check_stream(s);
  std::vector<char> buf;
  buf.reserve(s.size() * kRecordBytes);
  for (const auto& r : s) {
    const auto b = encode_record(r);
    buf.insert(buf.end(), b.begin(), b.end());
  }
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw ParseError("write failed");
}

inline TimestampStream read_timestamps(std::istream& in) {
  std::vector<char> bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  if (bytes.size() % kRecordBytes != 0)
    throw ParseError("truncated record at index " + std::to_string(bytes.size() / kRecordBytes));
  TimestampStream s(bytes.size() / kRecordBytes);
  for (std::size_t i = 0; i < s.size(); ++i) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(bytes.data() + i * kRecordBytes);
    s[i] = decode_record(std::span<const std::uint8_t, kRecordBytes>(p, kRecordBytes));
  }
  check_stream(s);
  return s;
}

inline void write_timestamps(std::span<const TimestampRecord> s, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError("cannot write '" + path + "'");
  write_timestamps(out, s);
}

inline TimestampStream read_timestamps(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open '" + path + "'");
  return read_timestamps(in);
}

}  // namespace qkdlink
