/*
 * Copyright (C) 2026 The mtv-cpp Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *      http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "mtv/analysis.hpp"

#include <cstdio>
#include <sstream>

#include "mtv/fusion.hpp"
#include "mtv/tokenizer.hpp"

namespace mtv {

namespace {

using u64 = std::uint64_t;

struct Acc {
  CostReport report;
  void add(int view, std::string component, std::size_t tokens, u64 params, u64 macs) {
    report.breakdown.push_back({view, std::move(component), tokens, params, macs});
    report.total_params += params;
    report.total_macs += macs;
  }
};

// Attention half of a layer: LN1 (2d), four d x d maps with biases.
u64 attn_params(u64 d) { return 4 * d * d + 4 * d + 2 * d; }
// MLP half: LN2 (2d), d -> mlp -> d with biases.
u64 mlp_params(u64 d, u64 mlp) { return 2 * d * mlp + mlp + d + 2 * d; }

// Transformer stack over `groups` independent sequences of `seq` tokens.
void add_layers(Acc& acc, int view, const std::string& prefix, u64 layers, u64 groups, u64 seq, u64 d, u64 mlp) {
  if (layers == 0) return;
  const u64 tokens = groups * seq;
  acc.add(view, prefix + "attention_proj", tokens, layers * attn_params(d), layers * 4 * tokens * d * d);
  acc.add(view, prefix + "attention_scores", tokens, 0, layers * groups * 2 * seq * seq * d);
  acc.add(view, prefix + "mlp", tokens, layers * mlp_params(d, mlp), layers * 2 * tokens * d * mlp);
}

CostReport analyse(const MTVConfig& cfg, const ClipShape& clip) {
  MTVConfig c = cfg;
  c.clip = clip;
  c.validate();
  Acc acc;
  const std::size_t V = c.views.size();
  const bool transformer = c.global.kind == AggregatorKind::kTransformer;
  const u64 dg = c.global.hidden;

  struct Geo {
    u64 nt, seq, groups, group_seq, d;
  };
  std::vector<Geo> geo;
  for (std::size_t j = 0; j < V; ++j) {
    const auto& v = c.views[j];
    const auto n = count_tokens(clip, v.tubelet);
    const u64 d = v.encoder.hidden;
    const u64 patch = v.tubelet.t * v.tubelet.h * v.tubelet.w * clip.channels;
    const u64 seq = n.spatial + 1;
    const bool fact = v.encoder.scope == AttentionScope::kFactorized;
    geo.push_back({n.temporal, seq, fact ? n.temporal : 1, fact ? seq : n.temporal * seq, d});
    const int vi = static_cast<int>(j);
    acc.add(vi, "embedding", n.total, patch * d + d + n.temporal * seq * d + d, n.total * patch * d);
    add_layers(acc, vi, "", v.encoder.num_layers, geo[j].groups, geo[j].group_seq, d, v.encoder.mlp_dim);
    if (transformer) acc.add(vi, "to_global", 1, d * dg + dg, d * dg);
  }

  const auto schedule = fusion_schedule(c.views, c.fusion);
  const u64 events = schedule.size();
  for (std::size_t p = 0; events > 0 && p + 1 < V; ++p) {
    const Geo& gc = geo[p];
    const Geo& gf = geo[p + 1];
    const u64 dc = gc.d, df = gf.d;
    const u64 nc = gc.nt * gc.seq, nf = gf.nt * gf.seq;
    const int vi = static_cast<int>(p);
    switch (c.fusion.method) {
      case FusionMethod::kCva: {
        // proj d_f x d_c, W^Q / W^K / W^V d_c x d_c, all bias-free
        const u64 params = df * dc + 3 * dc * dc;
        u64 macs = nf * df * dc + nc * dc * dc + 2 * nf * dc * dc;
        macs += 2 * nc * (c.fusion.cva_scope == CvaScope::kLocal ? nf / gc.nt : nf) * dc;
        acc.add(vi, "fusion_cva", nc, events * params, events * macs);
        break;
      }
      case FusionMethod::kBottleneck: {
        const u64 nb = c.fusion.bottleneck_tokens;
        // fine side: nb queries over [group tokens, nb, injected] per group
        const u64 injected = (p + 2 < V) ? (geo[p + 2].groups / gf.groups) * nb : 0;
        const u64 len = gf.group_seq + nb + injected;
        u64 fine = gf.groups * (nb * df * df + 2 * len * df * df + 2 * nb * len * df + nb * df * df);
        // projection into the coarse width, then coarse queries over it
        const u64 m = (gf.groups / gc.groups) * nb;
        u64 coarse = gf.groups * nb * df * dc;
        coarse += gc.groups * (2 * gc.group_seq * dc * dc + 2 * m * dc * dc + 2 * gc.group_seq * m * dc);
        acc.add(vi + 1, "fusion_bottleneck_tokens", nb, nb * df, 0);
        acc.add(vi, "fusion_bottleneck", nc, events * df * dc, events * (fine + coarse));
        break;
      }
      case FusionMethod::kMlp: {
        const u64 mlp = c.views[p].encoder.mlp_dim;
        acc.add(vi, "fusion_mlp", nc, events * df * mlp, events * nc * df * mlp);
        break;
      }
      case FusionMethod::kNone:
        break;
    }
  }

  u64 width = 0;
  if (transformer) {
    const u64 lg = c.global.num_layers;
    if (lg > 0) acc.add(-1, "global_cls", 1, dg, 0);
    add_layers(acc, -1, "global_", lg, 1, V + (lg > 0 ? 1 : 0), dg, c.global.mlp_dim);
    acc.add(-1, "global_norm", 1, 2 * dg, 0);
    width = dg;
  } else {
    u64 concat = 0;
    for (const auto& g : geo) concat += g.d;
    acc.add(-1, "global_mlp", 1, concat * c.global.mlp_dim + c.global.mlp_dim, concat * c.global.mlp_dim);
    width = c.global.mlp_dim;
  }
  acc.add(-1, "head", 1, width * c.num_classes + c.num_classes, width * c.num_classes);

  acc.report.total_flops = acc.report.total_macs * static_cast<u64>(acc.report.flops_per_mac);
  return acc.report;
}

}  // namespace

CostReport count_params(const MTVConfig& config) { return analyse(config, config.clip); }

CostReport count_flops(const MTVConfig& config, const ClipShape& clip) { return analyse(config, clip); }

const std::vector<TableReference>& table_references() {
  // Reference GFLOPs / MParams on 32x224x224 clips.
  // The GFLOPs agree with a one-FLOP-per-multiply-accumulate count (e.g. a
  // single B/4 view is 145 GFLOPs either way), so they are read that way.
  static const std::vector<TableReference> refs = {
      {"b8-ti2", "B/8+Ti/2", "cva", 81, 161, 1},
      {"b2-ti8", "B/2+Ti/8", "cva", 337, 221, 1},
      {"b8-s4-ti2", "B/8+S/4+Ti/2", "cva", 202, 250, 1},
      {"b2-s4-ti8", "B/2+S/4+Ti/8", "cva", 384, 310, 1},
      {"b4-s8-ti16", "B/4+S/8+Ti/16", "cva", 195, 314, 1},
      {"b4-b8-b16", "B/4+B/8+B/16", "cva", 324, 759, 1},
      {"b2-b8", "B/2+B/8", "cva", 448, 465, 1},
      {"b2-b4-b8", "B/2+B/4+B/8", "cva", 637, 751, 1},
      {"b4", "B/4", "none", 145, 173, 1},
      {"s8", "S/8", "none", 20, 60, 1},
      {"ti16", "Ti/16", "none", 3, 13, 1},
      {"b4-s8-ti16-ensemble", "B/4+S/8+Ti/16", "ensemble", 168, 246, 1},
      {"b4-s8-ti16-late", "B/4+S/8+Ti/16", "late fusion", 187, 306, 1},
      {"b4-s8-ti16-mlp", "B/4+S/8+Ti/16", "mlp", 202, 323, 1},
      {"b4-s8-ti16-bottleneck", "B/4+S/8+Ti/16", "bottleneck", 188, 306, 1},
      {"b4-ti16", "B/4+Ti/16", "cva", 168, 224, 1},
  };
  return refs;
}

std::optional<TableReference> find_reference(std::string_view key) {
  for (const auto& r : table_references()) {
    if (r.key == key) return r;
  }
  return std::nullopt;
}

Deviation compare_table(const CostReport& report, const TableReference& reference) {
  Deviation d;
  d.gflops = report.gflops_at(reference.flops_per_mac);
  d.gflops_ref = reference.gflops;
  d.gflops_rel = (d.gflops - d.gflops_ref) / d.gflops_ref;
  d.mparams = report.mparams();
  d.mparams_ref = reference.mparams;
  d.mparams_rel = (d.mparams - d.mparams_ref) / d.mparams_ref;
  return d;
}

std::string format_report(const CostReport& report, const std::optional<TableReference>& reference) {
  std::ostringstream os;
  char line[256];
  std::snprintf(line, sizeof(line), "%-5s %-26s %10s %14s %16s\n", "view", "component", "tokens", "params",
                "GFLOPs");
  os << line;
  for (const auto& e : report.breakdown) {
    std::snprintf(line, sizeof(line), "%-5s %-26s %10zu %14llu %16.4f\n",
                  e.view < 0 ? "-" : std::to_string(e.view).c_str(), e.component.c_str(), e.tokens,
                  static_cast<unsigned long long>(e.params),
                  static_cast<double>(e.macs) * report.flops_per_mac * 1e-9);
    os << line;
  }
  std::snprintf(line, sizeof(line), "total: %.3f MParams, %.3f GFLOPs (%s)\n", report.mparams(), report.gflops(),
                report.flop_convention.c_str());
  os << line;

  os << "params=" << report.total_params << "\n";
  os << "macs=" << report.total_macs << "\n";
  os << "flops=" << report.total_flops << "\n";
  os << "flops_per_mac=" << report.flops_per_mac << "\n";
  if (reference) {
    const Deviation d = compare_table(report, *reference);
    std::snprintf(line, sizeof(line),
                  "reference: %s (%s) %.0f GFLOPs / %.0f MParams at %d FLOP per MAC\n"
                  "model at that convention: %.1f GFLOPs (%+.1f%%), %.1f MParams (%+.1f%%)\n",
                  reference->notation.c_str(), reference->method.c_str(), reference->gflops, reference->mparams,
                  reference->flops_per_mac, d.gflops, 100.0 * d.gflops_rel, d.mparams, 100.0 * d.mparams_rel);
    os << line;
    os << "ref_gflops=" << reference->gflops << "\n";
    os << "ref_mparams=" << reference->mparams << "\n";
    os << "gflops_deviation=" << d.gflops_rel << "\n";
    os << "mparams_deviation=" << d.mparams_rel << "\n";
  }
  return os.str();
}

}  // namespace mtv
