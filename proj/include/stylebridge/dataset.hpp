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

// Image sources: procedurally generated toy glyph domains and directory
// datasets described by a manifest.
//
// Manifest format (manifest.txt in the dataset directory): one image per
// line, "<filename>[,<label>]". Blank lines and lines starting with '#' are
// ignored.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "stylebridge/error.hpp"
#include "stylebridge/image.hpp"
#include "stylebridge/image_io.hpp"
#include "stylebridge/random.hpp"

namespace stylebridge {

struct Dataset {
    std::string domain;
    std::vector<ImageTensor> images;
    std::vector<std::string> labels;

    std::size_t size() const { return images.size(); }
    bool empty() const { return images.empty(); }

    /// Throws DatasetError unless non-empty and every image is res x res x channels.
    void require_compatible(int resolution, int channels) const {
        if (images.empty()) throw DatasetError("dataset '" + domain + "' is empty");
        for (const auto& img : images)
            if (img.height != resolution || img.width != resolution || img.channels != channels)
                throw DatasetError("dataset '" + domain + "' image is " + std::to_string(img.height) + "x" +
                                   std::to_string(img.width) + "x" + std::to_string(img.channels) + ", model needs " +
                                   std::to_string(resolution) + "x" + std::to_string(resolution) + "x" +
                                   std::to_string(channels));
    }
};

// ---------------------------------------------------------------------------
// Toy glyph domains. Every domain shares one geometric distribution (shape,
// position, size, rotation) and differs only in rendering colors, so a glyph
// specification has a natural counterpart in every domain.

enum class GlyphShape { Disk, Square, Ring, Cross };

struct GlyphSpec {
    GlyphShape shape = GlyphShape::Disk;
    double cx = 0.5, cy = 0.5;  // center, unit coordinates
    double size = 0.25;         // half-extent, unit coordinates
    double angle = 0.0;         // radians
};

struct DomainStyle {
    std::array<double, 3> background;
    std::array<double, 3> foreground;
};

inline const std::vector<std::string>& toy_domain_names() {
    static const std::vector<std::string> names{"A", "B", "C", "D"};
    return names;
}

inline DomainStyle toy_domain_style(const std::string& domain) {
    if (domain == "A") return {{-0.7, -0.7, -0.7}, {0.7, 0.7, 0.7}};    // light glyph on dark gray
    if (domain == "B") return {{0.7, 0.45, 0.1}, {-0.6, -0.5, -0.3}};   // dark glyph on warm paper
    if (domain == "C") return {{-0.5, -0.5, 0.5}, {0.6, 0.7, -0.4}};    // yellow glyph on blue
    if (domain == "D") return {{0.1, 0.6, 0.2}, {0.7, -0.5, 0.6}};      // magenta glyph on green
    throw DatasetError("unknown toy domain '" + domain + "' (known: A, B, C, D)");
}

inline GlyphSpec random_glyph(Rng& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    GlyphSpec g;
    g.shape = static_cast<GlyphShape>(std::min(3, static_cast<int>(u(rng) * 4.0)));
    g.cx = 0.3 + 0.4 * u(rng);
    g.cy = 0.3 + 0.4 * u(rng);
    g.size = 0.14 + 0.14 * u(rng);
    g.angle = u(rng) * std::numbers::pi / 2.0;
    return g;
}

/// True when unit-coordinate point (x, y) lies inside the glyph.
inline bool glyph_contains(const GlyphSpec& g, double x, double y) {
    const double dx = x - g.cx, dy = y - g.cy;
    const double c = std::cos(g.angle), s = std::sin(g.angle);
    const double u = (c * dx + s * dy) / g.size, v = (-s * dx + c * dy) / g.size;
    switch (g.shape) {
        case GlyphShape::Disk: return u * u + v * v <= 1.0;
        case GlyphShape::Square: return std::abs(u) <= 0.85 && std::abs(v) <= 0.85;
        case GlyphShape::Ring: {
            const double r2 = u * u + v * v;
            return r2 <= 1.0 && r2 >= 0.36;
        }
        case GlyphShape::Cross: return (std::abs(u) <= 1.0 && std::abs(v) <= 0.3) || (std::abs(v) <= 1.0 && std::abs(u) <= 0.3);
    }
    return false;
}

/// Renders with 4x4 supersampling. `jitter` shifts both colors per channel.
inline ImageTensor render_glyph(const GlyphSpec& g, const DomainStyle& style, int resolution,
                                std::array<double, 3> jitter = {0.0, 0.0, 0.0}, int channels = 3) {
    constexpr int ss = 4;
    ImageTensor img(resolution, resolution, channels);
    for (int y = 0; y < resolution; ++y)
        for (int x = 0; x < resolution; ++x) {
            int hits = 0;
            for (int sy = 0; sy < ss; ++sy)
                for (int sx = 0; sx < ss; ++sx)
                    hits += glyph_contains(g, (x + (sx + 0.5) / ss) / resolution, (y + (sy + 0.5) / ss) / resolution);
            const double m = static_cast<double>(hits) / (ss * ss);
            for (int c = 0; c < channels; ++c) {
                const int k = channels == 3 ? c : 0;
                const double v = style.background[k] * (1.0 - m) + style.foreground[k] * m + jitter[k];
                img.at(y, x, c) = std::clamp(v, -1.0, 1.0);
            }
        }
    return img;
}

/// n images of a toy domain; image i is a pure function of (seed, i).
inline Dataset make_toy_dataset(const std::string& domain, int n, int resolution, std::uint64_t seed,
                                int channels = 3) {
    const DomainStyle style = toy_domain_style(domain);
    Dataset ds;
    ds.domain = domain;
    for (int i = 0; i < n; ++i) {
        Rng rng(derive_seed(seed, static_cast<std::uint64_t>(i), 0x617970));
        const GlyphSpec g = random_glyph(rng);
        std::uniform_real_distribution<double> j(-0.05, 0.05);
        const std::array<double, 3> jitter{j(rng), j(rng), j(rng)};
        ds.images.push_back(render_glyph(g, style, resolution, jitter, channels));
        ds.labels.push_back(domain);
    }
    return ds;
}

// ---------------------------------------------------------------------------
// Directory datasets

inline Dataset load_image_directory(const std::filesystem::path& dir, int resolution, int channels,
                                    std::string domain = {}) {
    const auto manifest = dir / "manifest.txt";
    std::ifstream in(manifest);
    if (!in) throw DatasetError("missing manifest " + manifest.string());
    Dataset ds;
    ds.domain = domain.empty() ? dir.filename().string() : std::move(domain);
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line.front() == '#') continue;
        std::string file = line, label;
        if (auto comma = line.find(','); comma != std::string::npos) {
            file = line.substr(0, comma);
            label = line.substr(comma + 1);
        }
        ImageTensor img = resize(center_crop(read_png(dir / file, channels == 3)), resolution);
        ds.images.push_back(match_channels(img, channels));
        ds.labels.push_back(label);
    }
    if (ds.images.empty()) throw DatasetError("dataset " + dir.string() + " lists no images");
    return ds;
}

inline void write_image_directory(const Dataset& ds, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    std::ofstream manifest(dir / "manifest.txt", std::ios::trunc);
    for (std::size_t i = 0; i < ds.images.size(); ++i) {
        std::ostringstream name;
        name << "img_" << std::string(5 - std::min<std::size_t>(5, std::to_string(i).size()), '0') << i << ".png";
        write_png(ds.images[i], dir / name.str());
        manifest << name.str();
        if (i < ds.labels.size() && !ds.labels[i].empty()) manifest << ',' << ds.labels[i];
        manifest << '\n';
    }
}

}  // namespace stylebridge
