#include "xbn/memory_bank.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "xbn/error.hpp"

namespace xbn {

MemoryBank::MemoryBank(std::size_t capacity, std::size_t dim)
    : capacity_(capacity), dim_(dim), storage_(capacity, dim), labels_(capacity, 0), ids_(capacity, 0) {
    if (dim == 0) throw Error(ErrorCode::InvalidConfig, "memory bank dimension must be positive");
}

MemoryBank MemoryBank::from_fraction(double fraction, std::size_t train_size, std::size_t dim) {
    if (!(fraction >= 0.0 && fraction <= 1.0)) {
        throw Error(ErrorCode::InvalidConfig, "memory fraction must lie in [0, 1]");
    }
    const auto cap = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(train_size)));
    return MemoryBank(cap, dim);
}

void MemoryBank::enqueue(const EmbeddingBatch& batch) {
    if (batch.dim() != dim_) {
        throw Error(ErrorCode::DimensionMismatch,
                    "batch dimension " + std::to_string(batch.dim()) + " != bank dimension " + std::to_string(dim_));
    }
    if (capacity_ == 0) {
        next_id_ += batch.size();
        return;
    }
    const std::size_t n = batch.size();
    // Rows that would be evicted within this same call are never written.
    const std::size_t skip = n > capacity_ ? n - capacity_ : 0;
    next_id_ += skip;
    for (std::size_t i = skip; i < n; ++i) {
        std::size_t dst;
        if (size_ < capacity_) {
            dst = slot(size_);
            ++size_;
        } else {
            dst = head_;
            head_ = (head_ + 1) % capacity_;
        }
        const auto src = batch.vectors.row(i);
        std::copy(src.begin(), src.end(), storage_.row(dst).begin());
        labels_[dst] = batch.labels[i];
        ids_[dst] = next_id_++;
    }
}

MomentStats MemoryBank::moments() const { return compute_moments(snapshot()); }

void MemoryBank::adapt(const MomentStats& target) {
    if (size_ < 2) {
        throw Error(ErrorCode::InsufficientSamples, "adapt needs at least 2 stored entries, have " +
                                                        std::to_string(size_));
    }
    if (target.dim() != dim_) throw Error(ErrorCode::DimensionMismatch, "target stats dimension mismatch");
    // Column sums in oldest-first order so the statistics are identical to
    // those of snapshot().
    const MomentStats source = moments();
    for (std::size_t i = 0; i < size_; ++i) {
        auto r = storage_.row(slot(i));
        for (std::size_t j = 0; j < dim_; ++j) {
            r[j] = (r[j] - source.mean[j]) / source.std[j] * target.std[j] + target.mean[j];
        }
    }
}

EmbeddingBatch MemoryBank::snapshot() const {
    EmbeddingBatch out;
    out.vectors = Matrix(size_, dim_);
    out.labels.resize(size_);
    for (std::size_t i = 0; i < size_; ++i) {
        const auto src = storage_.row(slot(i));
        std::copy(src.begin(), src.end(), out.vectors.row(i).begin());
        out.labels[i] = labels_[slot(i)];
    }
    return out;
}

std::vector<std::uint64_t> MemoryBank::insertion_ids() const {
    std::vector<std::uint64_t> out(size_);
    for (std::size_t i = 0; i < size_; ++i) out[i] = ids_[slot(i)];
    return out;
}

EmbeddingBatch MemoryBank::reference_set(const EmbeddingBatch& batch) const {
    if (batch.dim() != dim_) {
        throw Error(ErrorCode::DimensionMismatch,
                    "batch dimension " + std::to_string(batch.dim()) + " != bank dimension " + std::to_string(dim_));
    }
    EmbeddingBatch out;
    out.vectors = Matrix(size_ + batch.size(), dim_);
    out.labels.resize(size_ + batch.size());
    for (std::size_t i = 0; i < size_; ++i) {
        const auto src = storage_.row(slot(i));
        std::copy(src.begin(), src.end(), out.vectors.row(i).begin());
        out.labels[i] = labels_[slot(i)];
    }
    std::copy(batch.vectors.data.begin(), batch.vectors.data.end(),
              out.vectors.data.begin() + static_cast<std::ptrdiff_t>(size_ * dim_));
    std::copy(batch.labels.begin(), batch.labels.end(), out.labels.begin() + static_cast<std::ptrdiff_t>(size_));
    return out;
}

}  // namespace xbn
