#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace qi {

/// Declared pixel-value domain of an Image. Integer inputs keep their raw
/// range until normalize_gray() is called; raw-f32 data is unconstrained.
enum class ValueRange { Normalized, Bits8, Bits16, Real };

inline const char* to_string(ValueRange r) {
    switch (r) {
        case ValueRange::Normalized: return "normalized";
        case ValueRange::Bits8: return "bits8";
        case ValueRange::Bits16: return "bits16";
        case ValueRange::Real: return "real";
    }
    return "unknown";
}

inline double value_range_max(ValueRange r) {
    switch (r) {
        case ValueRange::Normalized: return 1.0;
        case ValueRange::Bits8: return 255.0;
        case ValueRange::Bits16: return 65535.0;
        case ValueRange::Real: return 1.0;
    }
    return 1.0;
}

/// 2D grayscale raster, row-major, real-valued. The canonical unit passed
/// between all pipeline stages. Immutable by convention once built.
struct Image {
    int width = 0;
    int height = 0;
    std::vector<double> pixels;  // row-major, size width*height
    ValueRange range = ValueRange::Normalized;
    std::string source_id;
    bool degenerate = false;  // set when normalization hit a constant frame

    double& at(int row, int col) { return pixels[static_cast<size_t>(row) * width + col]; }
    double at(int row, int col) const { return pixels[static_cast<size_t>(row) * width + col]; }
    size_t size() const { return pixels.size(); }
};

inline Image make_image(int width, int height, ValueRange range = ValueRange::Normalized,
                        std::string source_id = {}) {
    if (width <= 0 || height <= 0)
        throw std::invalid_argument("image dimensions must be positive");
    Image img;
    img.width = width;
    img.height = height;
    img.pixels.assign(static_cast<size_t>(width) * height, 0.0);
    img.range = range;
    img.source_id = std::move(source_id);
    return img;
}

/// Checks the Image invariants; throws std::invalid_argument on violation.
inline void validate(const Image& img) {
    if (img.width <= 0 || img.height <= 0)
        throw std::invalid_argument("image dimensions must be positive");
    if (img.pixels.size() != static_cast<size_t>(img.width) * img.height)
        throw std::invalid_argument("pixel count does not match dimensions");
    for (double v : img.pixels) {
        if (!std::isfinite(v)) throw std::invalid_argument("non-finite pixel value");
        if (img.range == ValueRange::Normalized && (v < 0.0 || v > 1.0))
            throw std::invalid_argument("normalized image with pixel outside [0,1]");
    }
}

/// Ordered frames of one acquisition; all frames share dimensions.
struct FrameSequence {
    std::vector<Image> frames;
    std::string sequence_id;
    std::string patient_id;
};

inline void validate(const FrameSequence& seq) {
    if (seq.frames.empty()) throw std::invalid_argument("sequence has no frames");
    const int w = seq.frames.front().width;
    const int h = seq.frames.front().height;
    for (const Image& f : seq.frames) {
        if (f.width != w || f.height != h)
            throw std::invalid_argument("frame dimension mismatch in sequence " + seq.sequence_id);
    }
}

}  // namespace qi
