#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "xbn/moments.hpp"

namespace xbn {

/// Fixed-capacity FIFO of (embedding, label) pairs backed by a ring buffer.
/// Stored embeddings are plain values with no link to the model that made them.
/// A capacity of zero gives a bank that never holds anything.
class MemoryBank {
public:
    MemoryBank(std::size_t capacity, std::size_t dim);

    /// Capacity as a fraction of a training set of `train_size` rows, rounded to nearest.
    static MemoryBank from_fraction(double fraction, std::size_t train_size, std::size_t dim);

    std::size_t capacity() const noexcept { return capacity_; }
    std::size_t dim() const noexcept { return dim_; }
    std::size_t size() const noexcept { return size_; }
    bool empty() const noexcept { return size_ == 0; }

    /// Appends rows in order, evicting oldest entries beyond capacity.
    void enqueue(const EmbeddingBatch& batch);

    /// Moves the stored embeddings onto `target` with the moment-matching
    /// transform. Order and labels are preserved. Throws InsufficientSamples
    /// when fewer than two entries are held.
    void adapt(const MomentStats& target);

    /// Moments of the current contents (oldest first).
    MomentStats moments() const;

    /// Contents as a batch, oldest entry first.
    EmbeddingBatch snapshot() const;

    /// Insertion sequence numbers of held entries, oldest first.
    std::vector<std::uint64_t> insertion_ids() const;

    /// Bank rows followed by batch rows; the loss reference set.
    EmbeddingBatch reference_set(const EmbeddingBatch& batch) const;

private:
    std::size_t slot(std::size_t logical) const noexcept { return (head_ + logical) % capacity_; }

    std::size_t capacity_;
    std::size_t dim_;
    std::size_t head_ = 0;
    std::size_t size_ = 0;
    std::uint64_t next_id_ = 0;
    Matrix storage_;
    std::vector<Label> labels_;
    std::vector<std::uint64_t> ids_;
};

}  // namespace xbn
