#include "imdp/image_io.hpp"

#include <jpeglib.h>
#include <png.h>

#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <memory>

#include "imdp/common.hpp"

namespace imdp::io {

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

// Reads any PNG as 8-bit RGB rows.
std::vector<std::vector<png_byte>> read_png_rows(const std::string& path, int& h, int& w) {
    FilePtr fp(std::fopen(path.c_str(), "rb"));
    check_or<UnreadableImage>(fp != nullptr, "cannot open image: " + path);
    png_byte header[8];
    check_or<UnreadableImage>(std::fread(header, 1, 8, fp.get()) == 8 &&
                                  !png_sig_cmp(header, 0, 8),
                              "not a PNG file: " + path);

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png_create_info_struct(png);
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw UnreadableImage("corrupt PNG: " + path);
    }
    png_init_io(png, fp.get());
    png_set_sig_bytes(png, 8);
    png_read_info(png, info);

    w = static_cast<int>(png_get_image_width(png, info));
    h = static_cast<int>(png_get_image_height(png, info));
    png_byte color = png_get_color_type(png, info);
    png_byte depth = png_get_bit_depth(png, info);

    if (depth == 16) png_set_strip_16(png);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA)
        png_set_gray_to_rgb(png);
    png_set_strip_alpha(png);
    png_read_update_info(png, info);

    std::vector<std::vector<png_byte>> rows(static_cast<std::size_t>(h));
    std::vector<png_bytep> row_ptrs(static_cast<std::size_t>(h));
    std::size_t rowbytes = png_get_rowbytes(png, info);
    for (int y = 0; y < h; ++y) {
        rows[static_cast<std::size_t>(y)].resize(rowbytes);
        row_ptrs[static_cast<std::size_t>(y)] = rows[static_cast<std::size_t>(y)].data();
    }
    png_read_image(png, row_ptrs.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return rows;
}

}  // namespace

ImageU8 read_png(const std::string& path) {
    int h = 0, w = 0;
    auto rows = read_png_rows(path, h, w);
    ImageU8 img;
    img.h = h;
    img.w = w;
    img.rgb.resize(static_cast<std::size_t>(h) * w * 3);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w * 3; ++x)
            img.rgb[static_cast<std::size_t>(y) * w * 3 + x] = rows[static_cast<std::size_t>(y)][x];
    return img;
}

void write_png(const std::string& path, const ImageU8& img) {
    FilePtr fp(std::fopen(path.c_str(), "wb"));
    check_or<DataError>(fp != nullptr, "cannot write image: " + path);
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png_create_info_struct(png);
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw DataError("PNG write failed: " + path);
    }
    png_init_io(png, fp.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(img.w), static_cast<png_uint_32>(img.h), 8,
                 PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (int y = 0; y < img.h; ++y)
        png_write_row(png, const_cast<png_bytep>(img.rgb.data() +
                                                 static_cast<std::size_t>(y) * img.w * 3));
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

std::vector<std::uint8_t> read_png_gray(const std::string& path, int& h, int& w) {
    ImageU8 img = read_png(path);
    h = img.h;
    w = img.w;
    std::vector<std::uint8_t> gray(static_cast<std::size_t>(h) * w);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            gray[static_cast<std::size_t>(y) * w + x] = img.at(y, x, 0);
    return gray;
}

void write_png_gray(const std::string& path, int h, int w,
                    const std::vector<std::uint8_t>& gray) {
    check_or<DimensionMismatch>(gray.size() == static_cast<std::size_t>(h) * w,
                                "gray buffer does not match dims");
    FilePtr fp(std::fopen(path.c_str(), "wb"));
    check_or<DataError>(fp != nullptr, "cannot write image: " + path);
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png_create_info_struct(png);
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw DataError("PNG write failed: " + path);
    }
    png_init_io(png, fp.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), 8,
                 PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (int y = 0; y < h; ++y)
        png_write_row(png, const_cast<png_bytep>(gray.data() + static_cast<std::size_t>(y) * w));
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

// ---------------------------------------------------------------------------

namespace {

struct JpegErrorMgr {
    jpeg_error_mgr base;
    std::jmp_buf jump;
};

void jpeg_error_exit(j_common_ptr cinfo) {
    std::longjmp(reinterpret_cast<JpegErrorMgr*>(cinfo->err)->jump, 1);
}

}  // namespace

ImageU8 jpeg_roundtrip(const ImageU8& img, int quality) {
    check_or<ValueRange>(quality >= 1 && quality <= 100, "jpeg quality must be in [1,100]");

    unsigned char* buf = nullptr;
    unsigned long buf_size = 0;
    {
        jpeg_compress_struct cinfo;
        JpegErrorMgr err;
        cinfo.err = jpeg_std_error(&err.base);
        err.base.error_exit = jpeg_error_exit;
        if (setjmp(err.jump)) {
            jpeg_destroy_compress(&cinfo);
            std::free(buf);
            throw DataError("JPEG encode failed");
        }
        jpeg_create_compress(&cinfo);
        jpeg_mem_dest(&cinfo, &buf, &buf_size);
        cinfo.image_width = static_cast<JDIMENSION>(img.w);
        cinfo.image_height = static_cast<JDIMENSION>(img.h);
        cinfo.input_components = 3;
        cinfo.in_color_space = JCS_RGB;
        jpeg_set_defaults(&cinfo);
        jpeg_set_quality(&cinfo, quality, TRUE);
        jpeg_start_compress(&cinfo, TRUE);
        std::vector<JSAMPLE> row(static_cast<std::size_t>(img.w) * 3);
        while (cinfo.next_scanline < cinfo.image_height) {
            const std::uint8_t* src =
                img.rgb.data() + static_cast<std::size_t>(cinfo.next_scanline) * img.w * 3;
            std::copy(src, src + img.w * 3, row.data());
            JSAMPROW rp = row.data();
            jpeg_write_scanlines(&cinfo, &rp, 1);
        }
        jpeg_finish_compress(&cinfo);
        jpeg_destroy_compress(&cinfo);
    }

    ImageU8 out;
    {
        jpeg_decompress_struct dinfo;
        JpegErrorMgr err;
        dinfo.err = jpeg_std_error(&err.base);
        err.base.error_exit = jpeg_error_exit;
        if (setjmp(err.jump)) {
            jpeg_destroy_decompress(&dinfo);
            std::free(buf);
            throw DataError("JPEG decode failed");
        }
        jpeg_create_decompress(&dinfo);
        jpeg_mem_src(&dinfo, buf, buf_size);
        jpeg_read_header(&dinfo, TRUE);
        dinfo.out_color_space = JCS_RGB;
        jpeg_start_decompress(&dinfo);
        out.h = static_cast<int>(dinfo.output_height);
        out.w = static_cast<int>(dinfo.output_width);
        out.rgb.resize(static_cast<std::size_t>(out.h) * out.w * 3);
        while (dinfo.output_scanline < dinfo.output_height) {
            JSAMPROW rp = out.rgb.data() + static_cast<std::size_t>(dinfo.output_scanline) *
                                               out.w * 3;
            jpeg_read_scanlines(&dinfo, &rp, 1);
        }
        jpeg_finish_decompress(&dinfo);
        jpeg_destroy_decompress(&dinfo);
    }
    std::free(buf);
    return out;
}

Tensor to_tensor(const ImageU8& img) {
    Tensor t({img.h, img.w, 3});
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<double>(img.rgb[i]);
    return t;
}

ImageU8 to_u8(const Tensor& hwc) {
    check_or<DimensionMismatch>(hwc.rank() == 3 && hwc.dim(2) == 3, "to_u8: (H,W,3) required");
    ImageU8 img;
    img.h = hwc.dim(0);
    img.w = hwc.dim(1);
    img.rgb.resize(hwc.size());
    for (std::size_t i = 0; i < hwc.size(); ++i) {
        double v = std::lround(std::min(255.0, std::max(0.0, hwc[i])));
        img.rgb[i] = static_cast<std::uint8_t>(v);
    }
    return img;
}

}  // namespace imdp::io
