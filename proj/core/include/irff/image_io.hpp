#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "irff/tensor.hpp"

IRFF_BEGIN_NAMESPACE

/// 8-bit interleaved image, 1 or 3 channels.
struct Image {
    std::size_t channels = 0;
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<std::uint8_t> pixels;
};

/// Reads PNG (any bit depth or colour type, converted) or binary/ASCII PGM.
/// `channels` selects the output layout: 1 = gray, 3 = RGB.
Image read_image(const std::filesystem::path& path, std::size_t channels);

/// Writes an 8-bit gray or RGB PNG. Creates parent directories.
void write_png(const std::filesystem::path& path, const Image& image);

/// [C, H, W] tensor scaled to [0, 1].
Tensor image_to_tensor(const Image& image);

/// Quantizes a [C, H, W] tensor with values in [0, 1] (clamped) to 8 bits.
Image tensor_to_image(const Tensor& x);

IRFF_END_NAMESPACE
