#ifndef HYBRIDSIM_MULTI_INDEX_HPP
#define HYBRIDSIM_MULTI_INDEX_HPP

#include <array>
#include <cstdint>
#include <vector>

namespace hybridsim {

/// Exponent tuple (k1, k2, n1, n2) of a central moment
/// S[k1,k2,n1,n2] = <dp^k1 dk^k2 dq^n1 dx^n2>.
struct MultiIndex {
    std::array<int, 4> e{0, 0, 0, 0};

    constexpr MultiIndex() = default;
    constexpr MultiIndex(int k1, int k2, int n1, int n2) : e{k1, k2, n1, n2} {}

    constexpr int k1() const { return e[0]; }
    constexpr int k2() const { return e[1]; }
    constexpr int n1() const { return e[2]; }
    constexpr int n2() const { return e[3]; }
    constexpr int order() const { return e[0] + e[1] + e[2] + e[3]; }

    constexpr int operator[](int i) const { return e[static_cast<std::size_t>(i)]; }
    friend constexpr bool operator==(const MultiIndex&, const MultiIndex&) = default;

    /// Index with component i lowered by one (no bounds check).
    constexpr MultiIndex lowered(int i) const {
        MultiIndex r = *this;
        --r.e[static_cast<std::size_t>(i)];
        return r;
    }
};

/// Dense enumeration of every MultiIndex with order() <= order_cap, graded
/// lexicographic (by total order, then lexicographic within an order).
/// Provides O(1) position lookup for the hierarchy right-hand side.
class MomentLayout {
  public:
    explicit MomentLayout(int order_cap);

    int order_cap() const { return cap_; }
    std::size_t size() const { return indices_.size(); }
    const MultiIndex& index(std::size_t pos) const { return indices_[pos]; }
    const std::vector<MultiIndex>& indices() const { return indices_; }

    /// Position of idx in the enumeration, or -1 if order(idx) > cap.
    std::int32_t position(const MultiIndex& idx) const {
        if (idx.order() > cap_) return -1;
        return lookup_[pack(idx)];
    }

  private:
    std::size_t pack(const MultiIndex& idx) const {
        const auto d = static_cast<std::size_t>(cap_ + 1);
        return ((static_cast<std::size_t>(idx.e[0]) * d + static_cast<std::size_t>(idx.e[1])) * d +
                static_cast<std::size_t>(idx.e[2])) *
                   d +
               static_cast<std::size_t>(idx.e[3]);
    }

    int cap_;
    std::vector<MultiIndex> indices_;
    std::vector<std::int32_t> lookup_;
};

/// Shared layout instance for a given cap (layouts are immutable).
const MomentLayout& shared_layout(int order_cap);

} // namespace hybridsim

#endif
