// Copyright 2026 The fedproj Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#include "fedproj/wire.hpp"

#include <unistd.h>

#include <bit>
#include <cerrno>
#include <cstring>

#include "fedproj/error.hpp"

namespace fedproj {

void ByteWriter::u32(std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void ByteWriter::u64(std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void ByteWriter::f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
void ByteWriter::f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }

void ByteWriter::str(const std::string& s) {
  u32(static_cast<std::uint32_t>(s.size()));
  out_.insert(out_.end(), s.begin(), s.end());
}

std::span<const std::uint8_t> ByteReader::take(std::size_t n) {
  if (n > remaining()) throw Error(ErrorCode::kProtocol, "truncated message");
  auto s = in_.subspan(pos_, n);
  pos_ += n;
  return s;
}

std::uint8_t ByteReader::u8() { return take(1)[0]; }

std::uint32_t ByteReader::u32() {
  auto b = take(4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= std::uint32_t{b[i]} << (8 * i);
  return v;
}

std::uint64_t ByteReader::u64() {
  auto b = take(8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= std::uint64_t{b[i]} << (8 * i);
  return v;
}

float ByteReader::f32() { return std::bit_cast<float>(u32()); }
double ByteReader::f64() { return std::bit_cast<double>(u64()); }

std::string ByteReader::str() {
  const std::uint32_t n = u32();
  auto b = take(n);
  return std::string(b.begin(), b.end());
}

std::span<const std::uint8_t> ByteReader::rest() { return take(remaining()); }

void ByteReader::expect_end() const {
  if (remaining() != 0) throw Error(ErrorCode::kProtocol, "trailing bytes in message");
}

namespace {

void write_blocks(ByteWriter& w, std::uint8_t version, std::uint32_t partition_id,
                  RandomSeed seed, const std::vector<std::vector<float>>& blocks) {
  w.u8(version);
  w.u32(partition_id);
  w.u64(seed.value);
  w.u32(static_cast<std::uint32_t>(blocks.size()));
  for (const auto& b : blocks) {
    w.u32(static_cast<std::uint32_t>(b.size()));
    for (float x : b) w.f32(x);
  }
}

std::vector<float> read_floats(ByteReader& r) {
  const std::uint32_t n = r.u32();
  if (n > r.remaining() / 4) throw Error(ErrorCode::kProtocol, "coordinate count exceeds message");
  std::vector<float> out(n);
  for (auto& x : out) x = r.f32();
  return out;
}

}  // namespace

void write_projected_update(ByteWriter& w, const ProjectedUpdate& p) {
  write_blocks(w, p.version, p.partition_id, p.seed, p.coords);
}

ProjectedUpdate read_projected_update(ByteReader& r) {
  ProjectedUpdate p;
  p.version = r.u8();
  if (p.version != prng::kSeedDerivationVersion) {
    throw Error(ErrorCode::kProtocol,
                "unknown seed derivation version " + std::to_string(p.version));
  }
  p.partition_id = r.u32();
  p.seed = RandomSeed{r.u64()};
  const std::uint32_t blocks = r.u32();
  if (blocks > r.remaining() / 4) throw Error(ErrorCode::kProtocol, "block count exceeds message");
  p.coords.resize(blocks);
  for (auto& b : p.coords) b = read_floats(r);
  return p;
}

Bytes encode_projected_update(const ProjectedUpdate& p) {
  ByteWriter w;
  write_projected_update(w, p);
  return w.take();
}

ProjectedUpdate decode_projected_update(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  ProjectedUpdate p = read_projected_update(r);
  r.expect_end();
  return p;
}

void write_scalar_grads(ByteWriter& w, const ScalarGrads& g) {
  write_blocks(w, prng::kSeedDerivationVersion, 0, g.seed, {g.values});
}

ScalarGrads read_scalar_grads(ByteReader& r) {
  ProjectedUpdate p = read_projected_update(r);
  if (p.partition_id != 0 || p.coords.size() != 1) {
    throw Error(ErrorCode::kProtocol, "scalar gradients must be a single block");
  }
  return ScalarGrads{p.seed, std::move(p.coords[0])};
}

void write_raw_update(ByteWriter& w, std::span<const double> v) {
  w.u64(v.size());
  for (double x : v) w.f64(x);
}

std::vector<double> read_raw_update(ByteReader& r) {
  const std::uint64_t n = r.u64();
  if (n > r.remaining() / 8) throw Error(ErrorCode::kProtocol, "update length exceeds message");
  std::vector<double> out(n);
  for (auto& x : out) x = r.f64();
  return out;
}

Bytes encode_frame(MessageTag tag, std::span<const std::uint8_t> payload) {
  if (payload.size() + 1 > kMaxFrameBytes) throw Error(ErrorCode::kProtocol, "frame too large");
  ByteWriter w;
  w.u32(static_cast<std::uint32_t>(payload.size() + 1));
  w.u8(static_cast<std::uint8_t>(tag));
  w.raw(payload);
  return w.take();
}

namespace {

void write_all(int fd, const std::uint8_t* p, std::size_t n) {
  while (n > 0) {
    const ssize_t k = ::write(fd, p, n);
    if (k < 0) {
      if (errno == EINTR) continue;
      throw Error(ErrorCode::kIo, std::string("write: ") + std::strerror(errno));
    }
    p += k;
    n -= static_cast<std::size_t>(k);
  }
}

// Returns bytes read; short only at end of stream.
std::size_t read_all(int fd, std::uint8_t* p, std::size_t n) {
  std::size_t got = 0;
  while (got < n) {
    const ssize_t k = ::read(fd, p + got, n - got);
    if (k < 0) {
      if (errno == EINTR) continue;
      throw Error(ErrorCode::kIo, std::string("read: ") + std::strerror(errno));
    }
    if (k == 0) break;
    got += static_cast<std::size_t>(k);
  }
  return got;
}

}  // namespace

void write_frame(int fd, MessageTag tag, std::span<const std::uint8_t> payload) {
  const Bytes frame = encode_frame(tag, payload);
  write_all(fd, frame.data(), frame.size());
}

bool read_frame(int fd, Frame& frame) {
  std::uint8_t head[5];
  const std::size_t got = read_all(fd, head, sizeof head);
  if (got == 0) return false;
  if (got < sizeof head) throw Error(ErrorCode::kProtocol, "truncated frame header");
  ByteReader r(head);
  const std::uint32_t len = r.u32();
  if (len == 0 || len > kMaxFrameBytes) throw Error(ErrorCode::kProtocol, "bad frame length");
  frame.tag = static_cast<MessageTag>(r.u8());
  frame.payload.resize(len - 1);
  if (read_all(fd, frame.payload.data(), frame.payload.size()) != frame.payload.size()) {
    throw Error(ErrorCode::kProtocol, "truncated frame payload");
  }
  return true;
}

}  // namespace fedproj
