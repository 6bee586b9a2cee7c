#pragma once

#include <cstdint>
#include <string>
#include <string_view>

#include "layerlens/model.h"

namespace layerlens {

enum class BlockInit { he_uniform, identity };

/// Inserts conv(1x1, M->N) -> relu -> conv(1x1, N->M) -> relu, without a
/// skip connection, right after the `position`-th residual block (1-based),
/// where M is that block's channel count. `position` must leave a residual
/// block after the insertion point. Existing parameters are kept; the new
/// layers are named "insert<position>_conv1" etc. Identity init needs N == M.
ModelGraph insert_block(const ModelGraph& model, std::size_t position, std::size_t n, std::uint64_t seed,
                        BlockInit init = BlockInit::he_uniform);

/// Name of the next conv/dense layer after `layer`, provided only ReLU or
/// flatten layers sit in between. Throws ModelError otherwise.
std::string rescale_partner(const ModelGraph& model, std::string_view layer);

/// w(L) /= factor, b(L) /= factor, w(L+1) *= factor, b(L+1) unchanged.
/// Output is preserved because ReLU is positively homogeneous.
ModelGraph rescale_pair(const ModelGraph& model, std::string_view layer, double factor = 4.0);

}  // namespace layerlens
