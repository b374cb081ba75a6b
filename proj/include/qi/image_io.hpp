#pragma once

#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <png.h>
#include <json.hpp>

#include "qi/image.hpp"

namespace qi {

enum class ImageFormat { Pgm, Png, RawF32 };

class IoError : public std::runtime_error {
public:
    enum class Kind {
        MalformedHeader,
        TruncatedPayload,
        Unsupported,
        MissingFile,
        DimensionMismatch,
        EmptyManifest,
        WriteFailure,
        BadSidecar,
    };

    IoError(Kind kind, const std::string& msg) : std::runtime_error(msg), kind_(kind) {}
    Kind kind() const { return kind_; }

private:
    Kind kind_;
};

namespace detail {

inline std::vector<unsigned char> read_file_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError(IoError::Kind::MissingFile, "cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file_bytes(const std::filesystem::path& path, const void* data, size_t n) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError(IoError::Kind::WriteFailure, "cannot open " + path.string() + " for writing");
    out.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
    if (!out) throw IoError(IoError::Kind::WriteFailure, "short write to " + path.string());
}

// Reads one PGM header token, skipping whitespace and '#' comments.
inline std::string pgm_token(const std::vector<unsigned char>& bytes, size_t& pos) {
    while (pos < bytes.size()) {
        if (std::isspace(bytes[pos])) {
            ++pos;
        } else if (bytes[pos] == '#') {
            while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
        } else {
            break;
        }
    }
    std::string tok;
    while (pos < bytes.size() && !std::isspace(bytes[pos]) && bytes[pos] != '#')
        tok.push_back(static_cast<char>(bytes[pos++]));
    return tok;
}

inline long pgm_int(const std::vector<unsigned char>& bytes, size_t& pos, const char* what) {
    const std::string tok = pgm_token(bytes, pos);
    if (tok.empty()) throw IoError(IoError::Kind::MalformedHeader, std::string("missing PGM ") + what);
    for (char c : tok)
        if (!std::isdigit(static_cast<unsigned char>(c)))
            throw IoError(IoError::Kind::MalformedHeader, std::string("non-numeric PGM ") + what + ": " + tok);
    return std::stol(tok);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// PGM (P5 binary, maxval up to 65535; two-byte samples are big-endian)
// ---------------------------------------------------------------------------

inline Image load_pgm(const std::filesystem::path& path) {
    const auto bytes = detail::read_file_bytes(path);
    size_t pos = 0;
    const std::string magic = detail::pgm_token(bytes, pos);
    if (magic != "P5")
        throw IoError(IoError::Kind::MalformedHeader, "not a binary PGM (magic \"" + magic + "\")");
    const long w = detail::pgm_int(bytes, pos, "width");
    const long h = detail::pgm_int(bytes, pos, "height");
    const long maxval = detail::pgm_int(bytes, pos, "maxval");
    if (w <= 0 || h <= 0)
        throw IoError(IoError::Kind::MalformedHeader, "non-positive PGM dimensions");
    if (maxval <= 0 || maxval > 65535)
        throw IoError(IoError::Kind::Unsupported, "unsupported PGM maxval " + std::to_string(maxval));
    if (pos >= bytes.size() || !std::isspace(bytes[pos]))
        throw IoError(IoError::Kind::MalformedHeader, "missing separator after PGM maxval");
    ++pos;  // exactly one whitespace byte before the raster

    const int bytes_per = maxval > 255 ? 2 : 1;
    const size_t need = static_cast<size_t>(w) * static_cast<size_t>(h) * bytes_per;
    if (bytes.size() - pos < need)
        throw IoError(IoError::Kind::TruncatedPayload,
                      "PGM payload truncated: need " + std::to_string(need) + " bytes, have " +
                          std::to_string(bytes.size() - pos));

    Image img = make_image(static_cast<int>(w), static_cast<int>(h),
                           bytes_per == 2 ? ValueRange::Bits16 : ValueRange::Bits8, path.string());
    for (size_t i = 0; i < static_cast<size_t>(w) * h; ++i) {
        if (bytes_per == 1) {
            img.pixels[i] = bytes[pos + i];
        } else {
            img.pixels[i] = 256.0 * bytes[pos + 2 * i] + bytes[pos + 2 * i + 1];
        }
    }
    return img;
}

inline void save_pgm(const Image& img, const std::filesystem::path& path) {
    if (img.range != ValueRange::Bits8 && img.range != ValueRange::Bits16)
        throw IoError(IoError::Kind::Unsupported,
                      "PGM requires an integer-range image; use raw-f32 for real-valued data");
    const int maxval = img.range == ValueRange::Bits16 ? 65535 : 255;
    std::string header = "P5\n" + std::to_string(img.width) + " " + std::to_string(img.height) +
                         "\n" + std::to_string(maxval) + "\n";
    std::vector<unsigned char> out(header.begin(), header.end());
    out.reserve(out.size() + img.size() * (maxval > 255 ? 2 : 1));
    for (double v : img.pixels) {
        const long q = std::lround(std::min(std::max(v, 0.0), static_cast<double>(maxval)));
        if (maxval > 255) {
            out.push_back(static_cast<unsigned char>((q >> 8) & 0xff));
            out.push_back(static_cast<unsigned char>(q & 0xff));
        } else {
            out.push_back(static_cast<unsigned char>(q & 0xff));
        }
    }
    detail::write_file_bytes(path, out.data(), out.size());
}

// ---------------------------------------------------------------------------
// PNG grayscale 8/16-bit (libpng)
// ---------------------------------------------------------------------------

inline Image load_png(const std::filesystem::path& path) {
    const auto bytes = detail::read_file_bytes(path);
    if (bytes.size() < 8 || png_sig_cmp(bytes.data(), 0, 8) != 0)
        throw IoError(IoError::Kind::MalformedHeader, "not a PNG file: " + path.string());

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError(IoError::Kind::MalformedHeader, "libpng init failure");
    }

    struct Reader {
        const unsigned char* data;
        size_t size;
        size_t pos;
    } reader{bytes.data(), bytes.size(), 0};

    std::vector<png_bytep> row_ptrs;
    std::vector<unsigned char> raster;

    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError(IoError::Kind::TruncatedPayload, "corrupt PNG: " + path.string());
    }

    png_set_read_fn(png, &reader, [](png_structp p, png_bytep out, png_size_t n) {
        auto* r = static_cast<Reader*>(png_get_io_ptr(p));
        if (r->pos + n > r->size) png_error(p, "read past end");
        std::copy(r->data + r->pos, r->data + r->pos + n, out);
        r->pos += n;
    });

    png_read_info(png, info);
    const png_uint_32 w = png_get_image_width(png, info);
    const png_uint_32 h = png_get_image_height(png, info);
    const int depth = png_get_bit_depth(png, info);
    const int color = png_get_color_type(png, info);
    if (color != PNG_COLOR_TYPE_GRAY || (depth != 8 && depth != 16)) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError(IoError::Kind::Unsupported,
                      "only 8/16-bit grayscale PNG supported: " + path.string());
    }
    png_set_interlace_handling(png);
    png_read_update_info(png, info);

    const size_t rowbytes = png_get_rowbytes(png, info);
    raster.assign(rowbytes * h, 0);
    row_ptrs.resize(h);
    for (png_uint_32 r = 0; r < h; ++r) row_ptrs[r] = raster.data() + r * rowbytes;
    png_read_image(png, row_ptrs.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);

    Image img = make_image(static_cast<int>(w), static_cast<int>(h),
                           depth == 16 ? ValueRange::Bits16 : ValueRange::Bits8, path.string());
    for (png_uint_32 r = 0; r < h; ++r) {
        const unsigned char* row = raster.data() + r * rowbytes;
        for (png_uint_32 c = 0; c < w; ++c) {
            // 16-bit PNG samples are big-endian
            img.at(static_cast<int>(r), static_cast<int>(c)) =
                depth == 16 ? 256.0 * row[2 * c] + row[2 * c + 1] : row[c];
        }
    }
    return img;
}

inline void save_png(const Image& img, const std::filesystem::path& path) {
    if (img.range != ValueRange::Bits8 && img.range != ValueRange::Bits16)
        throw IoError(IoError::Kind::Unsupported,
                      "PNG requires an integer-range image; use raw-f32 for real-valued data");
    const int depth = img.range == ValueRange::Bits16 ? 16 : 8;
    const long maxval = depth == 16 ? 65535 : 255;

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_write_struct(&png, &info);
        throw IoError(IoError::Kind::WriteFailure, "libpng init failure");
    }

    std::vector<unsigned char> out;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw IoError(IoError::Kind::WriteFailure, "libpng write failure: " + path.string());
    }
    png_set_write_fn(
        png, &out,
        [](png_structp p, png_bytep data, png_size_t n) {
            auto* v = static_cast<std::vector<unsigned char>*>(png_get_io_ptr(p));
            v->insert(v->end(), data, data + n);
        },
        [](png_structp) {});

    png_set_IHDR(png, info, static_cast<png_uint_32>(img.width),
                 static_cast<png_uint_32>(img.height), depth, PNG_COLOR_TYPE_GRAY,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);

    const size_t rowbytes = static_cast<size_t>(img.width) * (depth / 8);
    std::vector<unsigned char> row(rowbytes);
    for (int r = 0; r < img.height; ++r) {
        for (int c = 0; c < img.width; ++c) {
            const long q =
                std::lround(std::min(std::max(img.at(r, c), 0.0), static_cast<double>(maxval)));
            if (depth == 16) {
                row[2 * c] = static_cast<unsigned char>((q >> 8) & 0xff);
                row[2 * c + 1] = static_cast<unsigned char>(q & 0xff);
            } else {
                row[c] = static_cast<unsigned char>(q & 0xff);
            }
        }
        png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    detail::write_file_bytes(path, out.data(), out.size());
}

// ---------------------------------------------------------------------------
// raw-f32: little-endian IEEE-754 floats, row-major, JSON sidecar {width, height}
// ---------------------------------------------------------------------------

inline std::filesystem::path sidecar_path(const std::filesystem::path& path) {
    return std::filesystem::path(path.string() + ".json");
}

inline void save_raw_f32(const double* values, int width, int height,
                         const std::filesystem::path& path) {
    std::vector<unsigned char> out;
    out.reserve(static_cast<size_t>(width) * height * 4);
    for (size_t i = 0; i < static_cast<size_t>(width) * height; ++i) {
        const float f = static_cast<float>(values[i]);
        std::uint32_t u;
        std::memcpy(&u, &f, 4);
        out.push_back(static_cast<unsigned char>(u & 0xff));
        out.push_back(static_cast<unsigned char>((u >> 8) & 0xff));
        out.push_back(static_cast<unsigned char>((u >> 16) & 0xff));
        out.push_back(static_cast<unsigned char>((u >> 24) & 0xff));
    }
    detail::write_file_bytes(path, out.data(), out.size());
    nlohmann::json sidecar{{"width", width}, {"height", height}};
    const std::string text = sidecar.dump(2) + "\n";
    detail::write_file_bytes(sidecar_path(path), text.data(), text.size());
}

inline void save_raw_f32(const Image& img, const std::filesystem::path& path) {
    save_raw_f32(img.pixels.data(), img.width, img.height, path);
}

inline Image load_raw_f32(const std::filesystem::path& path) {
    nlohmann::json sidecar;
    {
        std::ifstream in(sidecar_path(path));
        if (!in)
            throw IoError(IoError::Kind::BadSidecar, "missing sidecar " + sidecar_path(path).string());
        try {
            in >> sidecar;
        } catch (const nlohmann::json::exception& e) {
            throw IoError(IoError::Kind::BadSidecar,
                          "unparseable sidecar " + sidecar_path(path).string() + ": " + e.what());
        }
    }
    if (!sidecar.contains("width") || !sidecar.contains("height"))
        throw IoError(IoError::Kind::BadSidecar, "sidecar missing width/height: " + path.string());
    const int w = sidecar["width"].get<int>();
    const int h = sidecar["height"].get<int>();
    if (w <= 0 || h <= 0)
        throw IoError(IoError::Kind::MalformedHeader, "non-positive raw-f32 dimensions");

    const auto bytes = detail::read_file_bytes(path);
    const size_t need = static_cast<size_t>(w) * h * 4;
    if (bytes.size() < need)
        throw IoError(IoError::Kind::TruncatedPayload, "raw-f32 payload truncated: " + path.string());

    Image img = make_image(w, h, ValueRange::Real, path.string());
    for (size_t i = 0; i < static_cast<size_t>(w) * h; ++i) {
        const std::uint32_t u = static_cast<std::uint32_t>(bytes[4 * i]) |
                                (static_cast<std::uint32_t>(bytes[4 * i + 1]) << 8) |
                                (static_cast<std::uint32_t>(bytes[4 * i + 2]) << 16) |
                                (static_cast<std::uint32_t>(bytes[4 * i + 3]) << 24);
        float f;
        std::memcpy(&f, &u, 4);
        if (!std::isfinite(f))
            throw IoError(IoError::Kind::TruncatedPayload, "non-finite value in " + path.string());
        img.pixels[i] = f;
    }
    return img;
}

// ---------------------------------------------------------------------------
// Dispatch + manifest
// ---------------------------------------------------------------------------

inline Image load_image(const std::filesystem::path& path, ImageFormat format) {
    switch (format) {
        case ImageFormat::Pgm: return load_pgm(path);
        case ImageFormat::Png: return load_png(path);
        case ImageFormat::RawF32: return load_raw_f32(path);
    }
    throw IoError(IoError::Kind::Unsupported, "unknown image format");
}

inline void save_image(const Image& img, const std::filesystem::path& path, ImageFormat format) {
    switch (format) {
        case ImageFormat::Pgm: save_pgm(img, path); return;
        case ImageFormat::Png: save_png(img, path); return;
        case ImageFormat::RawF32: save_raw_f32(img, path); return;
    }
    throw IoError(IoError::Kind::Unsupported, "unknown image format");
}

inline ImageFormat format_from_extension(const std::filesystem::path& path) {
    std::string ext = path.extension().string();
    for (char& c : ext) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    if (ext == ".pgm") return ImageFormat::Pgm;
    if (ext == ".png") return ImageFormat::Png;
    if (ext == ".f32") return ImageFormat::RawF32;
    throw IoError(IoError::Kind::Unsupported, "cannot infer format from extension: " + path.string());
}

/// Sequence manifest: JSON {sequence_id, patient_id, frames:[paths]}.
/// Relative frame paths resolve against the manifest's directory.
inline FrameSequence load_sequence(const std::filesystem::path& manifest_path) {
    nlohmann::json doc;
    {
        std::ifstream in(manifest_path);
        if (!in) throw IoError(IoError::Kind::MissingFile, "cannot open manifest " + manifest_path.string());
        try {
            in >> doc;
        } catch (const nlohmann::json::exception& e) {
            throw IoError(IoError::Kind::MalformedHeader,
                          "unparseable manifest " + manifest_path.string() + ": " + e.what());
        }
    }
    FrameSequence seq;
    seq.sequence_id = doc.value("sequence_id", "");
    seq.patient_id = doc.value("patient_id", "");
    if (!doc.contains("frames") || !doc["frames"].is_array() || doc["frames"].empty())
        throw IoError(IoError::Kind::EmptyManifest, "manifest lists no frames: " + manifest_path.string());

    const std::filesystem::path base = manifest_path.parent_path();
    for (const auto& entry : doc["frames"]) {
        std::filesystem::path p = entry.get<std::string>();
        if (p.is_relative()) p = base / p;
        Image frame = load_image(p, format_from_extension(p));
        if (!seq.frames.empty() &&
            (frame.width != seq.frames.front().width || frame.height != seq.frames.front().height))
            throw IoError(IoError::Kind::DimensionMismatch,
                          "frame dimension mismatch at " + p.string());
        seq.frames.push_back(std::move(frame));
    }
    return seq;
}

inline void save_sequence_manifest(const FrameSequence& seq, const std::vector<std::string>& frame_paths,
                                   const std::filesystem::path& manifest_path) {
    nlohmann::json doc{{"sequence_id", seq.sequence_id},
                       {"patient_id", seq.patient_id},
                       {"frames", frame_paths}};
    const std::string text = doc.dump(2) + "\n";
    detail::write_file_bytes(manifest_path, text.data(), text.size());
}

}  // namespace qi
