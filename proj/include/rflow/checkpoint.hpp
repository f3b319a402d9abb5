#pragma once

#include <filesystem>

#include "rflow/velocityfield.hpp"

namespace rflow {

// Checkpoint layout ("RFLOW"): magic, version u32, stage u32, dim u32,
// cond_count u32, embed_width u32, time_embed_width u32, activation u32,
// layer widths (count u32 + each u32), metadata block, then little-endian
// f64 parameter blocks in order: per layer weights (row-major) then bias,
// condition table, null embedding. Round-trips bit-exactly.
void save_checkpoint(const VelocityField& field, const std::filesystem::path& path);
VelocityField load_checkpoint(const std::filesystem::path& path);

}  // namespace rflow
