/* Copyright 2026 The CPR Engine Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include "cpr/tensor.hpp"

#include <cmath>
#include <fstream>
#include <iterator>
#include <limits>
#include <string>

#include "byte_io.hpp"
#include "cpr/errors.hpp"

namespace cpr {

namespace {

constexpr char kMagic[4] = {'C', 'P', 'R', 'T'};

}  // namespace

FeatureTensor::FeatureTensor(Index height, Index width, Index channels, int scale_id)
    : height_(height), width_(width), scale_id_(scale_id) {
  if (height <= 0 || width <= 0 || channels <= 0) {
    throw ArgumentError("tensor dimensions must be positive");
  }
  patches_ = PatchMatrix::Zero(height * width, channels);
}

FeatureTensor::FeatureTensor(Index height, Index width, PatchMatrix patches, int scale_id)
    : height_(height), width_(width), scale_id_(scale_id), patches_(std::move(patches)) {
  if (height <= 0 || width <= 0 || patches_.cols() <= 0) {
    throw ArgumentError("tensor dimensions must be positive");
  }
  if (patches_.rows() != height * width) {
    throw ShapeError("patch matrix has " + std::to_string(patches_.rows()) + " rows, expected " +
                     std::to_string(height * width));
  }
}

void FeatureTensor::validate() const {
  if (height_ <= 0 || width_ <= 0 || channels() <= 0) {
    throw ValidationError("tensor has an empty dimension");
  }
  if (!patches_.allFinite()) {
    throw ValidationError("tensor contains non-finite values");
  }
}

std::vector<std::uint8_t> encode_tensor(const FeatureTensor& t) {
  detail::ByteWriter w;
  w.bytes().reserve(kTensorHeaderBytes + static_cast<std::size_t>(t.patches().size()) * 4);
  w.raw({reinterpret_cast<const std::uint8_t*>(kMagic), 4});
  w.u32(kTensorFormatVersion);
  w.u8(0);  // float32
  w.u8(3);
  w.u32(static_cast<std::uint32_t>(t.height()));
  w.u32(static_cast<std::uint32_t>(t.width()));
  w.u32(static_cast<std::uint32_t>(t.channels()));
  w.u8(static_cast<std::uint8_t>(t.scale_id()));
  w.u8(0);
  w.u8(0);
  for (float v : t.values()) w.f32(v);
  return w.release();
}

TensorHeader decode_tensor_header(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 || !std::equal(kMagic, kMagic + 4, bytes.begin())) {
    throw FormatError(FormatErrorKind::kBadMagic, "bad magic: not a CPRT tensor");
  }
  if (bytes.size() < kTensorHeaderBytes) {
    throw FormatError(FormatErrorKind::kTruncated, "truncated CPRT header");
  }
  detail::ByteReader r(bytes.subspan(4));
  const std::uint32_t version = r.u32();
  if (version != kTensorFormatVersion) {
    throw FormatError(FormatErrorKind::kBadVersion, "unsupported CPRT version " + std::to_string(version));
  }
  const std::uint8_t dtype = r.u8();
  if (dtype != 0) {
    throw FormatError(FormatErrorKind::kBadDtype, "unsupported CPRT dtype code " + std::to_string(dtype));
  }
  const std::uint8_t ndim = r.u8();
  if (ndim != 3) {
    throw FormatError(FormatErrorKind::kBadNdim, "CPRT ndim must be 3, got " + std::to_string(ndim));
  }
  TensorHeader h;
  h.height = r.u32();
  h.width = r.u32();
  h.channels = r.u32();
  h.scale_id = r.u8();
  if (h.height == 0 || h.width == 0 || h.channels == 0) {
    throw ValidationError("CPRT tensor has a zero dimension");
  }
  return h;
}

FeatureTensor decode_tensor(std::span<const std::uint8_t> bytes) {
  const TensorHeader h = decode_tensor_header(bytes);
  const std::uint64_t count = std::uint64_t{h.height} * h.width * h.channels;
  const std::uint64_t expected = kTensorHeaderBytes + count * 4;
  if (bytes.size() < expected) {
    throw FormatError(FormatErrorKind::kTruncated, "truncated CPRT payload: " + std::to_string(bytes.size()) +
                                                       " bytes, expected " + std::to_string(expected));
  }
  if (bytes.size() > expected) {
    throw FormatError(FormatErrorKind::kTrailingBytes, "trailing bytes after CPRT payload");
  }
  PatchMatrix patches(static_cast<Index>(h.height) * h.width, static_cast<Index>(h.channels));
  detail::ByteReader r(bytes.subspan(kTensorHeaderBytes));
  float* out = patches.data();
  for (std::uint64_t i = 0; i < count; ++i) out[i] = r.f32();
  FeatureTensor t(h.height, h.width, std::move(patches), h.scale_id);
  t.validate();
  return t;
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw ReadError("cannot open " + path.string() + " for reading");
  }
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) {
    throw ReadError("read failure on " + path.string());
  }
  return bytes;
}

void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw WriteError("cannot open " + path.string() + " for writing");
  }
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  out.flush();
  if (!out) {
    throw WriteError("write failure on " + path.string());
  }
}

void write_tensor(const FeatureTensor& t, const std::filesystem::path& path) {
  write_file_bytes(path, encode_tensor(t));
}

FeatureTensor read_tensor(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  try {
    return decode_tensor(bytes);
  } catch (const FormatError& e) {
    throw FormatError(e.kind(), path.string() + ": " + e.what());
  } catch (const ValidationError& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

TensorHeader read_tensor_header(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw ReadError("cannot open " + path.string() + " for reading");
  }
  std::uint8_t buf[kTensorHeaderBytes] = {};
  in.read(reinterpret_cast<char*>(buf), kTensorHeaderBytes);
  const auto got = static_cast<std::size_t>(in.gcount());
  try {
    return decode_tensor_header({buf, got});
  } catch (const FormatError& e) {
    throw FormatError(e.kind(), path.string() + ": " + e.what());
  }
}

FeatureTensor grid_to_tensor(const ScoreGrid& grid, int scale_id) {
  PatchMatrix patches = Eigen::Map<const PatchMatrix>(grid.data(), grid.size(), 1);
  return FeatureTensor(grid.rows(), grid.cols(), std::move(patches), scale_id);
}

ScoreGrid tensor_to_grid(const FeatureTensor& t) {
  if (t.channels() != 1) {
    throw ShapeError("expected a single-channel tensor, got " + std::to_string(t.channels()) + " channels");
  }
  return Eigen::Map<const ScoreGrid>(t.patches().data(), t.height(), t.width());
}

}  // namespace cpr
