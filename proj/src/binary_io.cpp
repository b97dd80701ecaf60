// Copyright (C) 2026 pos-diffusion contributors
// SPDX-License-Identifier: Apache-2.0

#include "pos/binary_io.hpp"

#include <fstream>
#include <iterator>

namespace pos {
namespace {

constexpr char kTensorMagic[4] = {'P', 'T', 'N', 'S'};
constexpr std::uint32_t kTensorRank = 4;

}  // namespace

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("write failed for " + path.string());
}

std::vector<std::uint8_t> encode_tensor(const LatentTensor& t) {
    ByteWriter w;
    w.raw(kTensorMagic, 4);
    w.u32(kTensorRank);
    for (auto d : t.shape().dims()) w.u32(static_cast<std::uint32_t>(d));
    for (double v : t.data()) w.f32(static_cast<float>(v));
    return w.take();
}

LatentTensor decode_tensor(std::span<const std::uint8_t> bytes) {
    ByteReader r(bytes);
    auto magic = r.bytes(4);
    if (std::memcmp(magic.data(), kTensorMagic, 4) != 0) throw FormatError("bad tensor magic");
    const auto rank = r.u32();
    if (rank != kTensorRank) throw FormatError("unsupported tensor rank " + std::to_string(rank));
    Shape shape{r.u32(), r.u32(), r.u32(), r.u32()};
    if (r.remaining() != shape.numel() * 4) throw FormatError("tensor payload size does not match shape " + shape.str());
    std::vector<double> data(shape.numel());
    for (auto& v : data) v = static_cast<double>(r.f32());
    return LatentTensor(shape, std::move(data));
}

void save_tensor(const std::filesystem::path& path, const LatentTensor& t) { write_file_bytes(path, encode_tensor(t)); }

LatentTensor load_tensor(const std::filesystem::path& path) { return decode_tensor(read_file_bytes(path)); }

}  // namespace pos
