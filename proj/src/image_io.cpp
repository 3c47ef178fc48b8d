#include "usegmix/image_io.hpp"

#include <png.h>
#include <stdio.h>  // jpeglib.h needs FILE
#include <jpeglib.h>

#include <csetjmp>
#include <cstring>
#include <fstream>
#include <string>

#include "usegmix/error.hpp"

namespace usegmix {

namespace {

constexpr std::uint8_t kPngSignature[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};

// State shared with libpng callbacks. Only trivially destructible members,
// because errors unwind through longjmp.
struct PngReadState {
    const std::uint8_t* data = nullptr;
    std::size_t size = 0;
    std::size_t offset = 0;
    char message[256] = {};
};

struct PngWriteState {
    std::vector<std::uint8_t>* out = nullptr;
    char message[256] = {};
};

void png_read_cb(png_structp png, png_bytep dst, png_size_t n) {
    auto* st = static_cast<PngReadState*>(png_get_io_ptr(png));
    if (st->offset + n > st->size) {
        png_error(png, "unexpected end of stream");
    }
    std::memcpy(dst, st->data + st->offset, n);
    st->offset += n;
}

void png_read_error_cb(png_structp png, png_const_charp msg) {
    auto* st = static_cast<PngReadState*>(png_get_error_ptr(png));
    std::snprintf(st->message, sizeof(st->message), "%s", msg);
    png_longjmp(png, 1);
}

void png_write_cb(png_structp png, png_bytep src, png_size_t n) {
    auto* st = static_cast<PngWriteState*>(png_get_io_ptr(png));
    st->out->insert(st->out->end(), src, src + n);
}

void png_write_error_cb(png_structp png, png_const_charp msg) {
    auto* st = static_cast<PngWriteState*>(png_get_error_ptr(png));
    std::snprintf(st->message, sizeof(st->message), "%s", msg);
    png_longjmp(png, 1);
}

void png_warning_cb(png_structp, png_const_charp) {}

ImageRGB decode_png(std::span<const std::uint8_t> bytes) {
    PngReadState st;
    st.data = bytes.data();
    st.size = bytes.size();

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &st, png_read_error_cb, png_warning_cb);
    if (png == nullptr) throw DecodeError("png: cannot allocate decoder");
    png_infop info = png_create_info_struct(png);
    if (info == nullptr) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw DecodeError("png: cannot allocate decoder");
    }

    std::vector<std::uint8_t> pixels;
    std::vector<png_bytep> rows;
    png_uint_32 width = 0;
    png_uint_32 height = 0;

    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw DecodeError("png decode failed at byte offset " + std::to_string(st.offset) + ": " + st.message);
    }

    png_set_read_fn(png, &st, png_read_cb);
    png_read_info(png, info);
    width = png_get_image_width(png, info);
    height = png_get_image_height(png, info);
    const int color_type = png_get_color_type(png, info);

    png_set_expand(png);
    png_set_strip_16(png);
    png_set_strip_alpha(png);
    if (color_type == PNG_COLOR_TYPE_GRAY || color_type == PNG_COLOR_TYPE_GRAY_ALPHA) {
        png_set_gray_to_rgb(png);
    }
    png_set_interlace_handling(png);
    png_read_update_info(png, info);
    if (png_get_rowbytes(png, info) != static_cast<png_size_t>(width) * 3) {
        png_error(png, "unsupported pixel layout");
    }

    pixels.resize(static_cast<std::size_t>(width) * height * 3);
    rows.resize(height);
    for (png_uint_32 y = 0; y < height; ++y) rows[y] = pixels.data() + static_cast<std::size_t>(y) * width * 3;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);

    return ImageRGB(static_cast<int>(width), static_cast<int>(height), std::move(pixels));
}

std::vector<std::uint8_t> encode_png_raw(const std::uint8_t* data, int width, int height, int channels) {
    std::vector<std::uint8_t> out;
    PngWriteState st;
    st.out = &out;

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &st, png_write_error_cb, png_warning_cb);
    if (png == nullptr) throw Error("png: cannot allocate encoder");
    png_infop info = png_create_info_struct(png);
    if (info == nullptr) {
        png_destroy_write_struct(&png, nullptr);
        throw Error("png: cannot allocate encoder");
    }
    std::vector<png_bytep> rows(static_cast<std::size_t>(height));
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw Error(std::string("png encode failed: ") + st.message);
    }
    png_set_write_fn(png, &st, png_write_cb, nullptr);
    png_set_compression_level(png, 6);
    png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), 8,
                 channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    for (int y = 0; y < height; ++y) {
        rows[static_cast<std::size_t>(y)] =
            const_cast<png_bytep>(data + static_cast<std::size_t>(y) * width * channels);
    }
    png_write_info(png, info);
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    return out;
}

struct JpegErrorState {
    jpeg_error_mgr pub;
    std::jmp_buf jump;
    char message[JMSG_LENGTH_MAX] = {};
};

void jpeg_error_exit_cb(j_common_ptr cinfo) {
    auto* err = reinterpret_cast<JpegErrorState*>(cinfo->err);
    (*cinfo->err->format_message)(cinfo, err->message);
    std::longjmp(err->jump, 1);
}

ImageRGB decode_jpeg(std::span<const std::uint8_t> bytes) {
    jpeg_decompress_struct cinfo{};
    JpegErrorState jerr;
    cinfo.err = jpeg_std_error(&jerr.pub);
    jerr.pub.error_exit = jpeg_error_exit_cb;
    std::vector<std::uint8_t> pixels;

    if (setjmp(jerr.jump)) {
        const std::size_t consumed =
            cinfo.src != nullptr ? bytes.size() - cinfo.src->bytes_in_buffer : 0;
        jpeg_destroy_decompress(&cinfo);
        throw DecodeError("jpeg decode failed at byte offset " + std::to_string(consumed) + ": " + jerr.message);
    }
    jpeg_create_decompress(&cinfo);
    jpeg_mem_src(&cinfo, bytes.data(), static_cast<unsigned long>(bytes.size()));
    jpeg_read_header(&cinfo, TRUE);
    cinfo.out_color_space = JCS_RGB;
    jpeg_start_decompress(&cinfo);
    const auto width = static_cast<int>(cinfo.output_width);
    const auto height = static_cast<int>(cinfo.output_height);
    pixels.resize(static_cast<std::size_t>(width) * height * 3);
    while (cinfo.output_scanline < cinfo.output_height) {
        JSAMPROW row = pixels.data() + static_cast<std::size_t>(cinfo.output_scanline) * width * 3;
        jpeg_read_scanlines(&cinfo, &row, 1);
    }
    jpeg_finish_decompress(&cinfo);
    jpeg_destroy_decompress(&cinfo);
    return ImageRGB(width, height, std::move(pixels));
}

}  // namespace

ImageRGB decode_image(std::span<const std::uint8_t> bytes) {
    if (bytes.size() >= 8 && std::memcmp(bytes.data(), kPngSignature, 8) == 0) {
        return decode_png(bytes);
    }
    if (bytes.size() >= 3 && bytes[0] == 0xFF && bytes[1] == 0xD8 && bytes[2] == 0xFF) {
        return decode_jpeg(bytes);
    }
    throw DecodeError("unrecognized image signature at byte offset 0 (" + std::to_string(bytes.size()) +
                      " bytes; expected PNG or JPEG)");
}

BitMask decode_mask(std::span<const std::uint8_t> bytes) {
    const ImageRGB img = decode_image(bytes);
    BitMask m(img.width, img.height);
    for (std::size_t i = 0; i < m.bits.size(); ++i) {
        const int lum = img.data[i * 3] + img.data[i * 3 + 1] + img.data[i * 3 + 2];
        m.bits[i] = lum >= 3 * 128 ? 1 : 0;
    }
    return m;
}

std::vector<std::uint8_t> encode_png(const ImageRGB& img) {
    return encode_png_raw(img.data.data(), img.width, img.height, 3);
}

std::vector<std::uint8_t> encode_png(const BitMask& mask) {
    std::vector<std::uint8_t> gray(mask.bits.size());
    for (std::size_t i = 0; i < gray.size(); ++i) gray[i] = mask.bits[i] ? 255 : 0;
    return encode_png_raw(gray.data(), mask.width, mask.height, 1);
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (in.bad()) throw IoError("read failed: " + path.string());
    return bytes;
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open for writing: " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed: " + path.string());
}

ImageRGB load_image(const std::filesystem::path& path) {
    const auto bytes = read_file(path);
    try {
        return decode_image(bytes);
    } catch (const DecodeError& e) {
        throw DecodeError(path.string() + ": " + e.what());
    }
}

BitMask load_mask(const std::filesystem::path& path) {
    const auto bytes = read_file(path);
    try {
        return decode_mask(bytes);
    } catch (const DecodeError& e) {
        throw DecodeError(path.string() + ": " + e.what());
    }
}

void save_png(const std::filesystem::path& path, const ImageRGB& img) { write_file(path, encode_png(img)); }
void save_png(const std::filesystem::path& path, const BitMask& mask) { write_file(path, encode_png(mask)); }

}  // namespace usegmix
