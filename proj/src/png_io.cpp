#include <png.h>

#include <cstdio>
#include <vector>

#include "lavt/assets.hpp"
#include "lavt/checkpoint.hpp"

namespace lavt {

namespace {

struct File {
    FILE* f = nullptr;
    explicit File(FILE* f_) : f(f_) {}
    ~File() {
        if (f) std::fclose(f);
    }
};

uint8_t quantize(float v) {
    float c = std::min(std::max(v, 0.f), 1.f);
    return uint8_t(std::lround(c * 255.f));
}

void write_png(const std::string& path, const std::vector<uint8_t>& bytes, int h, int w,
               int channels) {
    File file(std::fopen(path.c_str(), "wb"));
    LAVT_CHECK(file.f, "png: cannot open '%s' for writing", path.c_str());
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    LAVT_CHECK(png, "png: writer allocation failed");
    png_infop info = png_create_info_struct(png);
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        fail(strf("png: failed writing '%s'", path.c_str()));
    }
    png_init_io(png, file.f);
    png_set_IHDR(png, info, w, h, 8,
                 channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    std::vector<png_bytep> rows(h);
    for (int y = 0; y < h; ++y)
        rows[y] = const_cast<png_bytep>(bytes.data() + size_t(y) * w * channels);
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

std::vector<uint8_t> read_png(const std::string& path, int& h, int& w, int& channels) {
    File file(std::fopen(path.c_str(), "rb"));
    LAVT_CHECK(file.f, "png: cannot open '%s'", path.c_str());
    unsigned char header[8];
    LAVT_CHECK(std::fread(header, 1, 8, file.f) == 8 && !png_sig_cmp(header, 0, 8),
               "png: '%s' is not a PNG file", path.c_str());
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    LAVT_CHECK(png, "png: reader allocation failed");
    png_infop info = png_create_info_struct(png);
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        fail(strf("png: corrupt file '%s'", path.c_str()));
    }
    png_init_io(png, file.f);
    png_set_sig_bytes(png, 8);
    png_read_info(png, info);
    w = int(png_get_image_width(png, info));
    h = int(png_get_image_height(png, info));
    png_byte color = png_get_color_type(png, info);
    png_byte depth = png_get_bit_depth(png, info);
    if (depth == 16) png_set_strip_16(png);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
    png_read_update_info(png, info);
    channels = int(png_get_channels(png, info));
    LAVT_CHECK(channels == 1 || channels == 3, "png: '%s' has %d channels after decoding",
               path.c_str(), channels);
    std::vector<uint8_t> bytes(size_t(h) * w * channels);
    std::vector<png_bytep> rows(h);
    for (int y = 0; y < h; ++y) rows[y] = bytes.data() + size_t(y) * w * channels;
    png_read_image(png, rows.data());
    png_destroy_read_struct(&png, &info, nullptr);
    return bytes;
}

}  // namespace

void save_png_rgb(const std::string& path, const Tensor& img) {
    LAVT_CHECK(img.rank() == 3 && img.dim(2) == 3, "save_png_rgb: expected (H,W,3), got %s",
               shape_str(img.shape()).c_str());
    int h = int(img.dim(0)), w = int(img.dim(1));
    std::vector<uint8_t> bytes(size_t(h) * w * 3);
    for (size_t i = 0; i < bytes.size(); ++i) bytes[i] = quantize(img.data()[i]);
    write_png(path, bytes, h, w, 3);
}

void save_png_gray(const std::string& path, const Tensor& img) {
    LAVT_CHECK(img.rank() == 2, "save_png_gray: expected (H,W), got %s",
               shape_str(img.shape()).c_str());
    int h = int(img.dim(0)), w = int(img.dim(1));
    std::vector<uint8_t> bytes(size_t(h) * w);
    for (size_t i = 0; i < bytes.size(); ++i) bytes[i] = quantize(img.data()[i]);
    write_png(path, bytes, h, w, 1);
}

void save_png_index(const std::string& path, const Tensor& img) {
    LAVT_CHECK(img.rank() == 2, "save_png_index: expected (H,W), got %s",
               shape_str(img.shape()).c_str());
    int h = int(img.dim(0)), w = int(img.dim(1));
    std::vector<uint8_t> bytes(size_t(h) * w);
    for (size_t i = 0; i < bytes.size(); ++i)
        bytes[i] = uint8_t(std::lround(img.data()[i]));
    write_png(path, bytes, h, w, 1);
}

Tensor load_png_rgb(const std::string& path) {
    int h, w, c;
    std::vector<uint8_t> bytes = read_png(path, h, w, c);
    Tensor out = Tensor::zeros({h, w, 3});
    if (c == 3) {
        for (int64_t i = 0; i < out.numel(); ++i) out.data()[i] = bytes[i] / 255.f;
    } else {
        for (int64_t i = 0; i < int64_t(h) * w; ++i)
            for (int k = 0; k < 3; ++k) out.data()[i * 3 + k] = bytes[i] / 255.f;
    }
    return out;
}

Tensor load_png_gray(const std::string& path) {
    int h, w, c;
    std::vector<uint8_t> bytes = read_png(path, h, w, c);
    Tensor out = Tensor::zeros({h, w});
    for (int64_t i = 0; i < out.numel(); ++i)
        out.data()[i] = bytes[size_t(i) * c] / 255.f;
    return out;
}

Tensor load_png_index(const std::string& path) {
    int h, w, c;
    std::vector<uint8_t> bytes = read_png(path, h, w, c);
    Tensor out = Tensor::zeros({h, w});
    for (int64_t i = 0; i < out.numel(); ++i) out.data()[i] = float(bytes[size_t(i) * c]);
    return out;
}

void save_image_f32(const std::string& path, const Tensor& img) {
    Checkpoint c;
    c.put("image", img);
    save_checkpoint(c, path);
}

Tensor load_image_f32(const std::string& path) { return load_checkpoint(path).get("image"); }

}  // namespace lavt
