#ifndef FEWREC_IMAGE_HPP
#define FEWREC_IMAGE_HPP

#include <string>
#include <vector>

namespace fewrec {

// H x W x 3 image with channel-major storage ([3, H, W], reals in [0,1]).
struct Image {
    int height = 0;
    int width = 0;
    std::vector<double> data;  // 3 * height * width

    Image() = default;
    Image(int h, int w) : height(h), width(w), data(static_cast<std::size_t>(3) * h * w, 0.0) {}

    double& at(int c, int y, int x) {
        return data[(static_cast<std::size_t>(c) * height + y) * width + x];
    }
    double at(int c, int y, int x) const {
        return data[(static_cast<std::size_t>(c) * height + y) * width + x];
    }
};

// Lossless 8-bit storage as binary PPM (P6).
void save_ppm(const Image& img, const std::string& path);
Image load_ppm(const std::string& path);

}  // namespace fewrec

#endif
