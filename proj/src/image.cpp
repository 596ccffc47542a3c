#include "image.hpp"

#include <jpeglib.h>
#include <png.h>

#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <cstring>

#include "errors.hpp"
#include "util.hpp"

namespace placer {

Image Image::blank(int width, int height, int channels, uint8_t fill) {
    if (width <= 0 || height <= 0 || (channels != 1 && channels != 3)) {
        fail(ErrorKind::InvalidArgument, "image must be gray or RGB with positive size");
    }
    Image img;
    img.width = width;
    img.height = height;
    img.channels = channels;
    img.data.assign(static_cast<size_t>(width) * height * channels, fill);
    return img;
}

double luminance(const Image& img, int y, int x) {
    if (img.channels == 1) {
        return img.at(y, x, 0) / 255.0;
    }
    double r = img.at(y, x, 0), g = img.at(y, x, 1), b = img.at(y, x, 2);
    return (0.299 * r + 0.587 * g + 0.114 * b) / 255.0;
}

Image scale_content(const Image& img, double factor) {
    if (factor <= 0.0) {
        fail(ErrorKind::InvalidArgument, "scale factor must be positive");
    }
    if (factor == 1.0) return img;
    Image out = Image::blank(img.width, img.height, img.channels, 0);
    double cx = (img.width - 1) / 2.0;
    double cy = (img.height - 1) / 2.0;
    for (int y = 0; y < img.height; y++) {
        for (int x = 0; x < img.width; x++) {
            // inverse map: sample source pixel that lands here
            int sx = static_cast<int>(std::lround(cx + (x - cx) / factor));
            int sy = static_cast<int>(std::lround(cy + (y - cy) / factor));
            if (sx < 0 || sy < 0 || sx >= img.width || sy >= img.height) continue;
            for (int c = 0; c < img.channels; c++) {
                out.at(y, x, c) = img.at(sy, sx, c);
            }
        }
    }
    return out;
}

/*----------------------------------- PNG -----------------------------------*/

namespace {

struct PngReadState {
    const std::vector<uint8_t>* bytes;
    size_t offset;
};

void png_mem_read(png_structp png, png_bytep out, png_size_t count) {
    auto* st = static_cast<PngReadState*>(png_get_io_ptr(png));
    if (st->offset + count > st->bytes->size()) {
        png_error(png, "png: truncated stream");
    }
    std::memcpy(out, st->bytes->data() + st->offset, count);
    st->offset += count;
}

void png_mem_write(png_structp png, png_bytep data, png_size_t count) {
    auto* out = static_cast<std::vector<uint8_t>*>(png_get_io_ptr(png));
    out->insert(out->end(), data, data + count);
}

void png_mem_flush(png_structp) {}

Image decode_png_bytes(const std::vector<uint8_t>& bytes) {
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) fail(ErrorKind::Internal, "png_create_read_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        fail(ErrorKind::Internal, "png_create_info_struct failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        fail(ErrorKind::Io, "invalid PNG data");
    }
    PngReadState st{&bytes, 0};
    png_set_read_fn(png, &st, png_mem_read);
    png_read_info(png, info);

    png_uint_32 w = png_get_image_width(png, info);
    png_uint_32 h = png_get_image_height(png, info);
    int color = png_get_color_type(png, info);
    int depth = png_get_bit_depth(png, info);

    if (depth == 16) png_set_strip_16(png);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
    png_read_update_info(png, info);

    color = png_get_color_type(png, info);
    int channels = (color == PNG_COLOR_TYPE_GRAY) ? 1 : 3;

    Image img = Image::blank(static_cast<int>(w), static_cast<int>(h), channels);
    std::vector<png_bytep> rows(h);
    for (png_uint_32 y = 0; y < h; y++) {
        rows[y] = img.data.data() + static_cast<size_t>(y) * w * channels;
    }
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return img;
}

/*----------------------------------- JPEG ----------------------------------*/

struct JpegErrorMgr {
    jpeg_error_mgr pub;
    jmp_buf jump;
};

void jpeg_error_exit(j_common_ptr cinfo) {
    auto* mgr = reinterpret_cast<JpegErrorMgr*>(cinfo->err);
    longjmp(mgr->jump, 1);
}

Image decode_jpeg_bytes(const std::vector<uint8_t>& bytes) {
    jpeg_decompress_struct cinfo;
    JpegErrorMgr err;
    cinfo.err = jpeg_std_error(&err.pub);
    err.pub.error_exit = jpeg_error_exit;
    if (setjmp(err.jump)) {
        jpeg_destroy_decompress(&cinfo);
        fail(ErrorKind::Io, "invalid JPEG data");
    }
    jpeg_create_decompress(&cinfo);
    jpeg_mem_src(&cinfo, bytes.data(), static_cast<unsigned long>(bytes.size()));
    jpeg_read_header(&cinfo, TRUE);
    cinfo.out_color_space = cinfo.num_components == 1 ? JCS_GRAYSCALE : JCS_RGB;
    jpeg_start_decompress(&cinfo);

    int channels = cinfo.output_components == 1 ? 1 : 3;
    Image img = Image::blank(static_cast<int>(cinfo.output_width),
                             static_cast<int>(cinfo.output_height), channels);
    while (cinfo.output_scanline < cinfo.output_height) {
        uint8_t* row = img.data.data() +
                       static_cast<size_t>(cinfo.output_scanline) * img.width * channels;
        jpeg_read_scanlines(&cinfo, &row, 1);
    }
    jpeg_finish_decompress(&cinfo);
    jpeg_destroy_decompress(&cinfo);
    return img;
}

}  // namespace

Image decode_image(const std::vector<uint8_t>& bytes) {
    static const uint8_t png_magic[4] = {0x89, 'P', 'N', 'G'};
    if (bytes.size() >= 4 && std::memcmp(bytes.data(), png_magic, 4) == 0) {
        return decode_png_bytes(bytes);
    }
    if (bytes.size() >= 2 && bytes[0] == 0xff && bytes[1] == 0xd8) {
        return decode_jpeg_bytes(bytes);
    }
    fail(ErrorKind::Io, "unrecognized image format (expected PNG or JPEG)");
}

Image load_image(const std::string& path) {
    std::string raw = read_file(path);
    std::vector<uint8_t> bytes(raw.begin(), raw.end());
    return decode_image(bytes);
}

std::vector<uint8_t> encode_png(const Image& img) {
    if (img.empty()) fail(ErrorKind::InvalidArgument, "cannot encode empty image");
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) fail(ErrorKind::Internal, "png_create_write_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        fail(ErrorKind::Internal, "png_create_info_struct failed");
    }
    std::vector<uint8_t> out;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        fail(ErrorKind::Io, "PNG encode failed");
    }
    png_set_write_fn(png, &out, png_mem_write, png_mem_flush);
    int color = img.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB;
    png_set_IHDR(png, info, img.width, img.height, 8, color, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (int y = 0; y < img.height; y++) {
        png_write_row(png, const_cast<png_bytep>(
                               img.data.data() + static_cast<size_t>(y) * img.width * img.channels));
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    return out;
}

void save_png(const std::string& path, const Image& img) {
    std::vector<uint8_t> bytes = encode_png(img);
    write_file(path, std::string(bytes.begin(), bytes.end()));
}

}  // namespace placer
