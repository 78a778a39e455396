// Copyright 2026 The fedproj Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

// Binary layouts of the protocol objects. All integers and floats are
// little-endian; see docs/PROTOCOL.md for the byte tables.

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fedproj/subspace.hpp"
#include "fedproj/zoo.hpp"

namespace fedproj {

using Bytes = std::vector<std::uint8_t>;

enum class MessageTag : std::uint8_t {
  kProjectedUpdate = 0x01,
  kScalarGrads = 0x02,
  kRawUpdate = 0x03,
  kRoundStart = 0x10,
  kShutdown = 0x11,
  kError = 0x12,
};

// Frames larger than this are rejected as corrupt.
inline constexpr std::uint32_t kMaxFrameBytes = 1u << 30;

class ByteWriter {
 public:
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u32(std::uint32_t v);
  void u64(std::uint64_t v);
  void f32(float v);
  void f64(double v);
  void str(const std::string& s);
  void raw(std::span<const std::uint8_t> b) { out_.insert(out_.end(), b.begin(), b.end()); }

  const Bytes& bytes() const noexcept { return out_; }
  Bytes take() { return std::move(out_); }

 private:
  Bytes out_;
};

// Bounds-checked reader; running past the end throws a protocol error.
class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> in) : in_(in) {}

  std::uint8_t u8();
  std::uint32_t u32();
  std::uint64_t u64();
  float f32();
  double f64();
  std::string str();
  std::span<const std::uint8_t> rest();

  std::size_t remaining() const noexcept { return in_.size() - pos_; }
  // Throws unless every byte was consumed.
  void expect_end() const;

 private:
  std::span<const std::uint8_t> take(std::size_t n);

  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
};

// version u8 | partition_id u32 | seed u64 | num_blocks u32 |
// per block: count u32, count x f32
void write_projected_update(ByteWriter& w, const ProjectedUpdate& p);
ProjectedUpdate read_projected_update(ByteReader& r);
Bytes encode_projected_update(const ProjectedUpdate& p);
ProjectedUpdate decode_projected_update(std::span<const std::uint8_t> bytes);

// Same layout with partition_id 0 and a single block of K scalars.
void write_scalar_grads(ByteWriter& w, const ScalarGrads& g);
ScalarGrads read_scalar_grads(ByteReader& r);

// count u64 | count x f64
void write_raw_update(ByteWriter& w, std::span<const double> v);
std::vector<double> read_raw_update(ByteReader& r);

// length u32 (tag + payload) | tag u8 | payload
Bytes encode_frame(MessageTag tag, std::span<const std::uint8_t> payload);

struct Frame {
  MessageTag tag;
  Bytes payload;
};

// Blocking frame I/O on a stream file descriptor. read_frame returns false
// on a clean end of stream before the first byte.
void write_frame(int fd, MessageTag tag, std::span<const std::uint8_t> payload);
bool read_frame(int fd, Frame& frame);

}  // namespace fedproj
