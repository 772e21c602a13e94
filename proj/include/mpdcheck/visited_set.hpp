#pragma once

#include <cstdint>
#include <cstring>
#include <memory>
#include <string_view>
#include <vector>

namespace mpdcheck {

/// Exact set of byte strings. Keys are packed into large arena blocks and
/// indexed by an open-addressing table of 8-byte slots, so the per-state
/// overhead is a few bytes beyond the encoding itself.
class VisitedSet {
public:
    VisitedSet() : slots_(1u << 16, 0) {}

    std::size_t size() const { return size_; }

    /// Inserts key; false if it was already present.
    bool insert(std::string_view key) {
        if ((size_ + 1) * 2 > slots_.size()) grow();
        const std::uint64_t h = hash(key);
        const std::uint64_t tag = h >> kOffsetBits;
        std::size_t i = h & (slots_.size() - 1);
        for (;; i = (i + 1) & (slots_.size() - 1)) {
            const std::uint64_t slot = slots_[i];
            if (slot == 0) break;
            if ((slot >> kOffsetBits) == tag && stored(slot) == key) return false;
        }
        slots_[i] = (tag << kOffsetBits) | (append(key) + 1);
        ++size_;
        return true;
    }

private:
    static constexpr unsigned kOffsetBits = 40;
    static constexpr std::size_t kBlockSize = std::size_t{1} << 26;

    static std::uint64_t hash(std::string_view key) {
        // FNV-1a followed by a final avalanche.
        std::uint64_t h = 1469598103934665603ull;
        for (unsigned char c : key) {
            h ^= c;
            h *= 1099511628211ull;
        }
        h ^= h >> 33;
        h *= 0xff51afd7ed558ccdull;
        h ^= h >> 33;
        return h;
    }

    std::string_view stored(std::uint64_t slot) const {
        const std::uint64_t offset = (slot & ((std::uint64_t{1} << kOffsetBits) - 1)) - 1;
        const char* p = blocks_[offset / kBlockSize].get() + offset % kBlockSize;
        std::uint32_t len = 0;
        std::memcpy(&len, p, sizeof len);
        return {p + sizeof len, len};
    }

    std::uint64_t append(std::string_view key) {
        const std::size_t need = sizeof(std::uint32_t) + key.size();
        if (blocks_.empty() || used_ + need > kBlockSize) {
            blocks_.push_back(std::make_unique<char[]>(kBlockSize));
            used_ = 0;
        }
        char* p = blocks_.back().get() + used_;
        const auto len = static_cast<std::uint32_t>(key.size());
        std::memcpy(p, &len, sizeof len);
        std::memcpy(p + sizeof len, key.data(), key.size());
        const std::uint64_t offset = (blocks_.size() - 1) * kBlockSize + used_;
        used_ += need;
        return offset;
    }

    void grow() {
        std::vector<std::uint64_t> old(slots_.size() * 2, 0);
        old.swap(slots_);
        for (std::uint64_t slot : old) {
            if (slot == 0) continue;
            std::size_t i = hash(stored(slot)) & (slots_.size() - 1);
            while (slots_[i] != 0) i = (i + 1) & (slots_.size() - 1);
            slots_[i] = slot;
        }
    }

    std::vector<std::unique_ptr<char[]>> blocks_;
    std::size_t used_ = 0;
    std::vector<std::uint64_t> slots_;
    std::size_t size_ = 0;
};

}  // namespace mpdcheck
