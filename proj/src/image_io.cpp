#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <sstream>

#include <jpeglib.h>
#include <png.h>

#include "abscam/imaging.hpp"

namespace abscam::imaging {

namespace {

using FilePtr = std::unique_ptr<std::FILE, decltype(&std::fclose)>;

std::vector<unsigned char> read_prefix(const std::filesystem::path& path, std::size_t n) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IngestionError("cannot open image file: " + path.string());
    std::vector<unsigned char> buf(n);
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(n));
    buf.resize(static_cast<std::size_t>(in.gcount()));
    return buf;
}

ImageTensor from_rgb8(int h, int w, const std::vector<unsigned char>& rgb) {
    std::vector<double> px(rgb.size());
    for (std::size_t i = 0; i < rgb.size(); ++i) px[i] = rgb[i] / 255.0;
    return ImageTensor(h, w, std::move(px));
}

ImageTensor decode_png(const std::filesystem::path& path, Warnings* warnings) {
    png_image img;
    std::memset(&img, 0, sizeof img);
    img.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&img, path.string().c_str()))
        throw IngestionError("cannot decode PNG " + path.string() + ": " + img.message);
    const auto original = img.format;
    img.format = PNG_FORMAT_RGB;
    std::vector<unsigned char> buf(PNG_IMAGE_SIZE(img));
    if (!png_image_finish_read(&img, nullptr, buf.data(), 0, nullptr)) {
        std::string msg = img.message;
        png_image_free(&img);
        throw IngestionError("cannot decode PNG " + path.string() + ": " + msg);
    }
    if (warnings) {
        if (!(original & PNG_FORMAT_FLAG_COLOR))
            warnings->push_back(path.string() + ": grayscale input converted to RGB");
        if (original & PNG_FORMAT_FLAG_ALPHA)
            warnings->push_back(path.string() + ": alpha channel dropped");
        if (original & PNG_FORMAT_FLAG_COLORMAP)
            warnings->push_back(path.string() + ": palette input expanded to RGB");
    }
    return from_rgb8(static_cast<int>(img.height), static_cast<int>(img.width), buf);
}

struct JpegErrorManager {
    jpeg_error_mgr base;
    std::jmp_buf jump;
    char message[JMSG_LENGTH_MAX];
};

void jpeg_error_exit(j_common_ptr cinfo) {
    auto* mgr = reinterpret_cast<JpegErrorManager*>(cinfo->err);
    (*cinfo->err->format_message)(cinfo, mgr->message);
    std::longjmp(mgr->jump, 1);
}

// Kept free of C++ objects with non-trivial destructors between setjmp and longjmp.
bool decode_jpeg_raw(std::FILE* file, int& h, int& w, int& components,
                     std::vector<unsigned char>& out, char* message) {
    jpeg_decompress_struct cinfo;
    JpegErrorManager err;
    cinfo.err = jpeg_std_error(&err.base);
    err.base.error_exit = jpeg_error_exit;
    if (setjmp(err.jump)) {
        std::strncpy(message, err.message, JMSG_LENGTH_MAX);
        jpeg_destroy_decompress(&cinfo);
        return false;
    }
    jpeg_create_decompress(&cinfo);
    jpeg_stdio_src(&cinfo, file);
    jpeg_read_header(&cinfo, TRUE);
    components = cinfo.num_components;
    cinfo.out_color_space = JCS_RGB;
    jpeg_start_decompress(&cinfo);
    h = static_cast<int>(cinfo.output_height);
    w = static_cast<int>(cinfo.output_width);
    out.resize(static_cast<std::size_t>(h) * w * 3);
    while (cinfo.output_scanline < cinfo.output_height) {
        JSAMPROW row = out.data() + static_cast<std::size_t>(cinfo.output_scanline) * w * 3;
        jpeg_read_scanlines(&cinfo, &row, 1);
    }
    jpeg_finish_decompress(&cinfo);
    jpeg_destroy_decompress(&cinfo);
    return true;
}

ImageTensor decode_jpeg(const std::filesystem::path& path, Warnings* warnings) {
    FilePtr file(std::fopen(path.string().c_str(), "rb"), &std::fclose);
    if (!file) throw IngestionError("cannot open image file: " + path.string());
    int h = 0, w = 0, components = 0;
    std::vector<unsigned char> rgb;
    char message[JMSG_LENGTH_MAX] = {0};
    if (!decode_jpeg_raw(file.get(), h, w, components, rgb, message))
        throw IngestionError("cannot decode JPEG " + path.string() + ": " + message);
    if (warnings && components != 3)
        warnings->push_back(path.string() + ": " + std::to_string(components) +
                            "-component JPEG converted to RGB");
    return from_rgb8(h, w, rgb);
}

} // namespace

ImageTensor load_image(const std::filesystem::path& path, Warnings* warnings) {
    const auto magic = read_prefix(path, 8);
    static constexpr unsigned char png_sig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
    if (magic.size() == 8 && std::memcmp(magic.data(), png_sig, 8) == 0) return decode_png(path, warnings);
    if (magic.size() >= 3 && magic[0] == 0xFF && magic[1] == 0xD8 && magic[2] == 0xFF)
        return decode_jpeg(path, warnings);
    throw IngestionError("unsupported or corrupt image file (expected PNG or JPEG): " + path.string());
}

Preprocessed load_and_preprocess(const std::filesystem::path& path, int height, int width,
                                 const NormalizationStats& stats, Warnings* warnings) {
    if (height <= 0 || width <= 0) throw std::invalid_argument("load_and_preprocess: target size must be positive");
    ImageTensor raw = load_image(path, warnings);
    ImageTensor image = (raw.height() == height && raw.width() == width)
                            ? std::move(raw)
                            : resize_bilinear(raw, height, width);
    NormalizedInput input = normalize(image, stats);
    return {std::move(image), std::move(input)};
}

void save_png(const ImageTensor& image, const std::filesystem::path& path) {
    std::vector<unsigned char> rgb(image.pixels().size());
    for (std::size_t i = 0; i < rgb.size(); ++i)
        rgb[i] = static_cast<unsigned char>(std::lround(image.pixels()[i] * 255.0));
    png_image img;
    std::memset(&img, 0, sizeof img);
    img.version = PNG_IMAGE_VERSION;
    img.width = static_cast<png_uint_32>(image.width());
    img.height = static_cast<png_uint_32>(image.height());
    img.format = PNG_FORMAT_RGB;
    if (!png_image_write_to_file(&img, path.string().c_str(), 0, rgb.data(), 0, nullptr))
        throw std::runtime_error("cannot write PNG " + path.string() + ": " + img.message);
}

std::string map_to_csv(const Grid& map) {
    std::string out;
    out.reserve(map.size() * 9);
    char buf[64];
    for (int i = 0; i < map.height; ++i) {
        for (int j = 0; j < map.width; ++j) {
            std::snprintf(buf, sizeof buf, j == 0 ? "%.6f" : ",%.6f", map.at(i, j));
            out += buf;
        }
        out += '\n';
    }
    return out;
}

void save_map_csv(const Grid& map, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << map_to_csv(map);
}

namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int b = 0; b < 4; ++b) out.push_back(static_cast<std::uint8_t>(v >> (8 * b)));
}

std::uint32_t get_u32(const std::vector<std::uint8_t>& in, std::size_t at) {
    std::uint32_t v = 0;
    for (int b = 0; b < 4; ++b) v |= static_cast<std::uint32_t>(in[at + b]) << (8 * b);
    return v;
}

} // namespace

std::vector<std::uint8_t> map_to_binary(const Grid& map) {
    std::vector<std::uint8_t> out;
    out.reserve(8 + map.size() * 4);
    put_u32(out, static_cast<std::uint32_t>(map.height));
    put_u32(out, static_cast<std::uint32_t>(map.width));
    for (double v : map.values) {
        const float f = static_cast<float>(v);
        std::uint32_t bits;
        std::memcpy(&bits, &f, 4);
        put_u32(out, bits);
    }
    return out;
}

Grid map_from_binary(const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() < 8) throw IngestionError("map binary: truncated header");
    const auto h = get_u32(bytes, 0);
    const auto w = get_u32(bytes, 4);
    if (bytes.size() != 8 + static_cast<std::size_t>(h) * w * 4)
        throw IngestionError("map binary: payload size does not match header");
    Grid g(static_cast<int>(h), static_cast<int>(w));
    for (std::size_t k = 0; k < g.size(); ++k) {
        const std::uint32_t bits = get_u32(bytes, 8 + 4 * k);
        float f;
        std::memcpy(&f, &bits, 4);
        g.values[k] = f;
    }
    return g;
}

void save_map_binary(const Grid& map, const std::filesystem::path& path) {
    const auto bytes = map_to_binary(map);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

} // namespace abscam::imaging
