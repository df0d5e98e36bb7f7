#pragma once

#include <cstdint>
#include <vector>

namespace bmp {

/// A partition of a ground set, stored as disjoint blocks that cover it.
/// Blocks and elements within blocks are kept in increasing order of first
/// appearance, which is the canonical restricted-growth-string order.
struct Partition {
    std::vector<std::vector<int>> blocks;
    int size() const { return static_cast<int>(blocks.size()); }
};

/// All partitions of a ground set A, enumerated via restricted growth
/// strings. The one-block partition is always first removed when asking for
/// the proper partitions P*(A).
struct PartitionSet {
    std::vector<int> ground;
    std::vector<Partition> all; // every partition, RGS order

    /// P*(A): partitions with at least two blocks.
    std::vector<const Partition*> proper() const;
};

/// Enumerates P(A) for |A| <= 12 (Bell(12) = 4213597 is the practical cap).
PartitionSet enumerate_partitions(const std::vector<int>& ground);

std::uint64_t bell_number(int k);

} // namespace bmp
