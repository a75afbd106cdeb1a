// Copyright 2026 The stylebridge Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// PNG read/write (8-bit, gray or RGB) and simple geometric resampling.
// Pixel mapping: byte = round((v + 1) * 127.5), v = byte / 127.5 - 1.

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "stylebridge/error.hpp"
#include "stylebridge/image.hpp"

namespace stylebridge {

inline std::uint8_t to_byte(double v) {
    const double b = std::round((std::clamp(v, -1.0, 1.0) + 1.0) * 127.5);
    return static_cast<std::uint8_t>(std::clamp(b, 0.0, 255.0));
}

inline double from_byte(std::uint8_t b) { return static_cast<double>(b) / 127.5 - 1.0; }

inline void write_png(const ImageTensor& img, const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    png_image image{};
    image.version = PNG_IMAGE_VERSION;
    image.width = static_cast<png_uint_32>(img.width);
    image.height = static_cast<png_uint_32>(img.height);
    image.format = img.channels == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
    std::vector<std::uint8_t> buf(img.pixels.size());
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < img.channels; ++c)
                buf[(static_cast<std::size_t>(y) * img.width + x) * img.channels + c] = to_byte(img.at(y, x, c));
    if (!png_image_write_to_file(&image, path.string().c_str(), 0, buf.data(), 0, nullptr))
        throw std::runtime_error("write_png " + path.string() + ": " + image.message);
}

/// Reads any PNG, converting to 8-bit gray or RGB (alpha composited on black).
inline ImageTensor read_png(const std::filesystem::path& path, bool force_rgb = false) {
    png_image image{};
    image.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&image, path.string().c_str()))
        throw DatasetError("read_png " + path.string() + ": " + image.message);
    const bool gray = !force_rgb && (image.format & PNG_FORMAT_FLAG_COLOR) == 0;
    image.format = gray ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
    const int channels = gray ? 1 : 3;
    std::vector<std::uint8_t> buf(PNG_IMAGE_SIZE(image));
    png_color black{0, 0, 0};
    if (!png_image_finish_read(&image, &black, buf.data(), 0, nullptr))
        throw DatasetError("read_png " + path.string() + ": " + image.message);
    ImageTensor img(static_cast<int>(image.height), static_cast<int>(image.width), channels);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < channels; ++c)
                img.at(y, x, c) = from_byte(buf[(static_cast<std::size_t>(y) * img.width + x) * channels + c]);
    return img;
}

/// Largest centered square crop.
inline ImageTensor center_crop(const ImageTensor& img) {
    const int s = std::min(img.height, img.width);
    const int oy = (img.height - s) / 2, ox = (img.width - s) / 2;
    ImageTensor out(s, s, img.channels);
    for (int c = 0; c < img.channels; ++c)
        for (int y = 0; y < s; ++y)
            for (int x = 0; x < s; ++x) out.at(y, x, c) = img.at(y + oy, x + ox, c);
    return out;
}

/// Box-filter resampling to size x size: area average with fractional
/// coverage when shrinking, nearest-neighbour when enlarging.
inline ImageTensor resize(const ImageTensor& img, int size) {
    if (img.height == size && img.width == size) return img;
    ImageTensor out(size, size, img.channels);
    const double sy = static_cast<double>(img.height) / size, sx = static_cast<double>(img.width) / size;
    for (int c = 0; c < img.channels; ++c)
        for (int y = 0; y < size; ++y)
            for (int x = 0; x < size; ++x) {
                const double y0 = y * sy, y1 = (y + 1) * sy, x0 = x * sx, x1 = (x + 1) * sx;
                double acc = 0.0, area = 0.0;
                for (int iy = static_cast<int>(y0); iy < std::min(img.height, static_cast<int>(std::ceil(y1))); ++iy) {
                    const double wy = std::min<double>(iy + 1, y1) - std::max<double>(iy, y0);
                    for (int ix = static_cast<int>(x0); ix < std::min(img.width, static_cast<int>(std::ceil(x1))); ++ix) {
                        const double wx = std::min<double>(ix + 1, x1) - std::max<double>(ix, x0);
                        acc += wy * wx * img.at(iy, ix, c);
                        area += wy * wx;
                    }
                }
                out.at(y, x, c) = area > 0.0 ? acc / area : 0.0;
            }
    return out;
}

/// Gray <-> RGB conversion to match a model's channel count.
inline ImageTensor match_channels(const ImageTensor& img, int channels) {
    if (img.channels == channels) return img;
    ImageTensor out(img.height, img.width, channels);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) {
            if (channels == 3) {
                for (int c = 0; c < 3; ++c) out.at(y, x, c) = img.at(y, x, 0);
            } else {
                out.at(y, x, 0) = 0.299 * img.at(y, x, 0) + 0.587 * img.at(y, x, 1) + 0.114 * img.at(y, x, 2);
            }
        }
    return out;
}

}  // namespace stylebridge
