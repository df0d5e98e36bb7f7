#include "bmp/partitions.hpp"

#include <array>
#include <stdexcept>

namespace bmp {

std::vector<const Partition*> PartitionSet::proper() const {
    std::vector<const Partition*> out;
    out.reserve(all.size());
    for (const auto& p : all)
        if (p.size() >= 2) out.push_back(&p);
    return out;
}

PartitionSet enumerate_partitions(const std::vector<int>& ground) {
    const int k = static_cast<int>(ground.size());
    if (k < 1 || k > 12)
        throw std::invalid_argument("enumerate_partitions: |A| must be in [1, 12]");

    PartitionSet out;
    out.ground = ground;

    // Restricted growth strings: a[0] = 0, a[i] <= max(a[0..i-1]) + 1.
    std::vector<int> a(k, 0);
    for (;;) {
        int nblocks = 0;
        for (int i = 0; i < k; ++i) nblocks = std::max(nblocks, a[i] + 1);
        Partition p;
        p.blocks.assign(nblocks, {});
        for (int i = 0; i < k; ++i) p.blocks[a[i]].push_back(ground[i]);
        out.all.push_back(std::move(p));

        int i = k - 1;
        for (; i > 0; --i) {
            int prefix_max = 0;
            for (int j = 0; j < i; ++j) prefix_max = std::max(prefix_max, a[j]);
            if (a[i] <= prefix_max) break;
        }
        if (i == 0) break;
        ++a[i];
        for (int j = i + 1; j < k; ++j) a[j] = 0;
    }
    return out;
}

std::uint64_t bell_number(int k) {
    if (k < 0 || k > 25) throw std::invalid_argument("bell_number: k out of range");
    // Bell triangle.
    std::vector<std::uint64_t> row{1};
    for (int i = 1; i <= k; ++i) {
        std::vector<std::uint64_t> next;
        next.reserve(i + 1);
        next.push_back(row.back());
        for (std::size_t j = 0; j < row.size(); ++j) next.push_back(next[j] + row[j]);
        row = std::move(next);
    }
    return row.front();
}

} // namespace bmp
