#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace giftlab {

// Dense row-major 2-D array of doubles. Scalars are 1x1, row vectors 1xN.
struct Mat {
    int rows{0};
    int cols{0};
    std::vector<double> data;

    Mat() = default;
    Mat(int r, int c) : rows(r), cols(c), data(static_cast<size_t>(r) * c, 0.0) {
        if (r < 0 || c < 0) throw std::invalid_argument("Mat: negative dimension");
    }
    Mat(int r, int c, std::vector<double> values) : rows(r), cols(c), data(std::move(values)) {
        if (data.size() != static_cast<size_t>(r) * c)
            throw std::invalid_argument("Mat: data size does not match " + std::to_string(r) + "x" +
                                        std::to_string(c));
    }

    static Mat zeros(int r, int c) { return Mat(r, c); }
    static Mat scalar(double v) {
        Mat m(1, 1);
        m.data[0] = v;
        return m;
    }
    static Mat row(std::vector<double> values) {
        const int n = static_cast<int>(values.size());
        return Mat(1, n, std::move(values));
    }

    int size() const { return rows * cols; }
    bool is_scalar() const { return rows == 1 && cols == 1; }
    bool same_shape(const Mat& o) const { return rows == o.rows && cols == o.cols; }

    double& at(int r, int c) { return data[static_cast<size_t>(r) * cols + c]; }
    double at(int r, int c) const { return data[static_cast<size_t>(r) * cols + c]; }

    double& operator[](size_t i) { return data[i]; }
    double operator[](size_t i) const { return data[i]; }

    std::string shape_str() const { return std::to_string(rows) + "x" + std::to_string(cols); }
};

}  // namespace giftlab
