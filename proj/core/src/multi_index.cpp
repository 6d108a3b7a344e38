#include "hybridsim/multi_index.hpp"

#include <map>
#include <memory>
#include <mutex>
#include <stdexcept>

namespace hybridsim {

MomentLayout::MomentLayout(int order_cap) : cap_(order_cap) {
    if (order_cap < 0) throw std::invalid_argument("MomentLayout: order cap must be >= 0");
    const auto d = static_cast<std::size_t>(cap_ + 1);
    lookup_.assign(d * d * d * d, -1);
    for (int order = 0; order <= cap_; ++order) {
        for (int k1 = 0; k1 <= order; ++k1)
            for (int k2 = 0; k2 <= order - k1; ++k2)
                for (int n1 = 0; n1 <= order - k1 - k2; ++n1) {
                    const MultiIndex idx(k1, k2, n1, order - k1 - k2 - n1);
                    lookup_[pack(idx)] = static_cast<std::int32_t>(indices_.size());
                    indices_.push_back(idx);
                }
    }
}

const MomentLayout& shared_layout(int order_cap) {
    static std::mutex mu;
    static std::map<int, std::unique_ptr<const MomentLayout>> cache;
    std::lock_guard<std::mutex> lock(mu);
    auto& slot = cache[order_cap];
    if (!slot) slot = std::make_unique<const MomentLayout>(order_cap);
    return *slot;
}

} // namespace hybridsim
