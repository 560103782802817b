#pragma once

#include <cassert>
#include <cstddef>
#include <vector>

namespace qprl {

/// Dense row-major 2-D array.
template <typename T>
class Grid {
public:
    Grid() = default;
    Grid(int rows, int cols, T fill = T{})
        : rows_(rows), cols_(cols), v_(static_cast<size_t>(rows) * cols, fill) {
        assert(rows >= 0 && cols >= 0);
    }

    int rows() const { return rows_; }
    int cols() const { return cols_; }
    size_t size() const { return v_.size(); }
    bool empty() const { return v_.empty(); }

    T& at(int r, int c) {
        assert(r >= 0 && r < rows_ && c >= 0 && c < cols_);
        return v_[static_cast<size_t>(r) * cols_ + c];
    }
    const T& at(int r, int c) const {
        assert(r >= 0 && r < rows_ && c >= 0 && c < cols_);
        return v_[static_cast<size_t>(r) * cols_ + c];
    }
    T& operator[](size_t i) { return v_[i]; }
    const T& operator[](size_t i) const { return v_[i]; }

    T* data() { return v_.data(); }
    const T* data() const { return v_.data(); }
    auto begin() { return v_.begin(); }
    auto end() { return v_.end(); }
    auto begin() const { return v_.begin(); }
    auto end() const { return v_.end(); }

    bool same_shape(const Grid& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }
    void fill(T value) { v_.assign(v_.size(), value); }

    friend bool operator==(const Grid& a, const Grid& b) {
        return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.v_ == b.v_;
    }

private:
    int rows_ = 0;
    int cols_ = 0;
    std::vector<T> v_;
};

}  // namespace qprl
