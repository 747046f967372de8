#include "tagkit/image_io.hpp"

#include <fstream>
#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "tagkit/errors.hpp"

namespace tagkit {

namespace {

Tensor mat_to_tensor(const cv::Mat& bgr) {
    Tensor t(Shape{1, 3, bgr.rows, bgr.cols});
    for (int y = 0; y < bgr.rows; ++y) {
        const cv::Vec3b* row = bgr.ptr<cv::Vec3b>(y);
        for (int x = 0; x < bgr.cols; ++x) {
            t.at(0, 0, y, x) = row[x][2] / 255.0;  // R
            t.at(0, 1, y, x) = row[x][1] / 255.0;  // G
            t.at(0, 2, y, x) = row[x][0] / 255.0;  // B
        }
    }
    return t;
}

cv::Mat tensor_to_mat(const Tensor& t) {
    const Shape& s = t.shape();
    if (s.n != 1 || s.c != 3)
        throw ShapeError("image tensor must be (1,3,H,W), got " + s.str());
    cv::Mat bgr(s.h, s.w, CV_8UC3);
    auto q = [](double v) {
        int iv = int(std::lround(v * 255.0));
        return uchar(std::clamp(iv, 0, 255));
    };
    for (int y = 0; y < s.h; ++y) {
        cv::Vec3b* row = bgr.ptr<cv::Vec3b>(y);
        for (int x = 0; x < s.w; ++x) {
            row[x][0] = q(t.at(0, 2, y, x));
            row[x][1] = q(t.at(0, 1, y, x));
            row[x][2] = q(t.at(0, 0, y, x));
        }
    }
    return bgr;
}

}  // namespace

Tensor load_image(const std::string& path) {
    cv::Mat m = cv::imread(path, cv::IMREAD_COLOR);
    if (m.empty()) throw IoError("cannot decode image: " + path);
    return mat_to_tensor(m);
}

void save_png(const std::string& path, const Tensor& image) {
    cv::Mat m = tensor_to_mat(image);
    if (!cv::imwrite(path, m)) throw IoError("cannot write PNG: " + path);
}

Tensor jpeg_reference_roundtrip(const Tensor& image, int quality) {
    if (quality < 1 || quality > 100)
        throw ConfigError("jpeg quality must be in [1,100], got " + std::to_string(quality));
    cv::Mat m = tensor_to_mat(image);
    std::vector<uchar> buf;
    std::vector<int> opts{cv::IMWRITE_JPEG_QUALITY, quality};
    if (!cv::imencode(".jpg", m, buf, opts)) throw IoError("in-memory JPEG encode failed");
    cv::Mat back = cv::imdecode(buf, cv::IMREAD_COLOR);
    if (back.empty()) throw IoError("in-memory JPEG decode failed");
    return mat_to_tensor(back);
}

Tensor center_crop_resize(const Tensor& image, int size) {
    const Shape& s = image.shape();
    if (s.n != 1 || s.c != 3)
        throw ShapeError("center_crop_resize expects (1,3,H,W), got " + s.str());
    if (size < 1) throw ConfigError("target size must be positive");
    int side = std::min(s.h, s.w);
    int y0 = (s.h - side) / 2, x0 = (s.w - side) / 2;
    cv::Mat m(side, side, CV_64FC3);
    for (int y = 0; y < side; ++y) {
        cv::Vec3d* row = m.ptr<cv::Vec3d>(y);
        for (int x = 0; x < side; ++x)
            row[x] = {image.at(0, 0, y0 + y, x0 + x), image.at(0, 1, y0 + y, x0 + x),
                      image.at(0, 2, y0 + y, x0 + x)};
    }
    cv::Mat r;
    cv::resize(m, r, cv::Size(size, size), 0, 0, side >= size ? cv::INTER_AREA : cv::INTER_LINEAR);
    Tensor out(Shape{1, 3, size, size});
    for (int y = 0; y < size; ++y) {
        const cv::Vec3d* row = r.ptr<cv::Vec3d>(y);
        for (int x = 0; x < size; ++x)
            for (int c = 0; c < 3; ++c) out.at(0, c, y, x) = std::clamp(row[x][c], 0.0, 1.0);
    }
    return out;
}

std::string fnv1a_hex(const void* data, std::size_t len) {
    const auto* p = static_cast<const unsigned char*>(data);
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (std::size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return std::string(buf);
}

std::string digest_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open for digest: " + path);
    std::vector<char> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return fnv1a_hex(bytes.data(), bytes.size());
}

}  // namespace tagkit
