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

#include <algorithm>
#include <cstddef>
#include <string>
#include <vector>

#include "stylebridge/error.hpp"
#include "stylebridge/tensor.hpp"

namespace stylebridge {

/// Square image with values nominally in [-1, 1], stored planar (channel-major).
struct ImageTensor {
    int height = 0;
    int width = 0;
    int channels = 0;
    std::vector<double> pixels;

    ImageTensor() = default;
    ImageTensor(int h, int w, int c, double fill = 0.0)
        : height(h), width(w), channels(c), pixels(static_cast<std::size_t>(h) * w * c, fill) {}

    double& at(int y, int x, int c) { return pixels[(static_cast<std::size_t>(c) * height + y) * width + x]; }
    double at(int y, int x, int c) const { return pixels[(static_cast<std::size_t>(c) * height + y) * width + x]; }

    bool same_shape(const ImageTensor& o) const {
        return height == o.height && width == o.width && channels == o.channels;
    }

    /// As a [1, C, H, W] tensor.
    Tensor to_tensor() const { return Tensor(Shape{1, channels, height, width}, pixels); }

    /// Sample `index` of a [N, C, H, W] tensor.
    static ImageTensor from_tensor(const Tensor& t, int index = 0) {
        if (t.rank() != 4) throw DimensionError("image from tensor: rank " + std::to_string(t.rank()));
        ImageTensor img(t.dim(2), t.dim(3), t.dim(1));
        const std::size_t n = img.pixels.size();
        std::copy_n(t.data() + n * static_cast<std::size_t>(index), n, img.pixels.begin());
        return img;
    }

    void clamp() {
        for (auto& v : pixels) v = std::clamp(v, -1.0, 1.0);
    }

    friend bool operator==(const ImageTensor&, const ImageTensor&) = default;
};

inline void require_same_shape(const ImageTensor& a, const ImageTensor& b, const char* what) {
    if (!a.same_shape(b))
        throw DimensionError(std::string(what) + ": image shape mismatch (" + std::to_string(a.height) + "x" +
                             std::to_string(a.width) + "x" + std::to_string(a.channels) + " vs " +
                             std::to_string(b.height) + "x" + std::to_string(b.width) + "x" +
                             std::to_string(b.channels) + ")");
}

/// Stacks equally shaped images into a [N, C, H, W] tensor.
inline Tensor stack_images(const std::vector<ImageTensor>& images) {
    if (images.empty()) throw DimensionError("stack_images: empty list");
    const auto& f = images.front();
    Tensor out(Shape{static_cast<int>(images.size()), f.channels, f.height, f.width});
    std::size_t off = 0;
    for (const auto& img : images) {
        require_same_shape(f, img, "stack_images");
        std::copy(img.pixels.begin(), img.pixels.end(), out.data() + off);
        off += img.pixels.size();
    }
    return out;
}

}  // namespace stylebridge
