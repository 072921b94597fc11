#include "detkit/bra.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>
#include <string>

#include "detkit/format.hpp"
#include "detkit/rng.hpp"

namespace detkit::bra {

namespace {

// Columns [c0, c1) as a copy.
Tensor slice_cols(const Tensor& m, std::size_t c0, std::size_t c1) {
  Tensor out = Tensor::matrix(m.shape[0], c1 - c0);
  for (std::size_t i = 0; i < m.shape[0]; ++i)
    for (std::size_t c = c0; c < c1; ++c) out.at(i, c - c0) = m.at(i, c);
  return out;
}

void add_into_cols(Tensor& dst, const Tensor& src, std::size_t c0) {
  for (std::size_t i = 0; i < src.shape[0]; ++i)
    for (std::size_t c = 0; c < src.shape[1]; ++c)
      dst.at(i, c0 + c) += src.at(i, c);
}

// Rows [r0, r0+rows) as a copy.
Tensor slice_rows(const Tensor& m, std::size_t r0, std::size_t rows) {
  Tensor out = Tensor::matrix(rows, m.shape[1]);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t c = 0; c < m.shape[1]; ++c) out.at(i, c) = m.at(r0 + i, c);
  return out;
}

// dL/dS from dL/dP where P = softmax_rows(S).
Tensor softmax_backward(const Tensor& p, const Tensor& dp) {
  Tensor ds = Tensor::matrix(p.shape[0], p.shape[1]);
  for (std::size_t i = 0; i < p.shape[0]; ++i) {
    double dot = 0.0;
    for (std::size_t j = 0; j < p.shape[1]; ++j) dot += dp.at(i, j) * p.at(i, j);
    for (std::size_t j = 0; j < p.shape[1]; ++j)
      ds.at(i, j) = p.at(i, j) * (dp.at(i, j) - dot);
  }
  return ds;
}

struct Dims {
  std::size_t regions, block_h, block_w, tokens_per_region, total_tokens;
};

Dims layout(const FeatureMap& fm, std::size_t s) {
  if (s == 0) throw std::invalid_argument("regions_per_side must be positive");
  if (fm.height % s != 0 || fm.width % s != 0)
    throw std::invalid_argument(
        "feature map " + std::to_string(fm.height) + "x" +
        std::to_string(fm.width) + " not divisible into " + std::to_string(s) +
        "x" + std::to_string(s) + " regions");
  Dims d;
  d.block_h = fm.height / s;
  d.block_w = fm.width / s;
  d.regions = s * s;
  d.tokens_per_region = d.block_h * d.block_w;
  d.total_tokens = fm.height * fm.width;
  return d;
}

}  // namespace

double BraConfig::effective_scale() const {
  if (scale != 0.0) return scale;
  return 1.0 / std::sqrt(static_cast<double>(embed_dim) /
                         static_cast<double>(heads));
}

void BraConfig::validate() const {
  if (regions_per_side == 0)
    throw std::invalid_argument("regions_per_side must be positive");
  if (top_k == 0 || top_k > regions_per_side * regions_per_side)
    throw std::invalid_argument("top_k must be in [1, regions_per_side^2]");
  if (embed_dim == 0) throw std::invalid_argument("embed_dim must be positive");
  if (heads == 0 || embed_dim % heads != 0)
    throw std::invalid_argument("embed_dim must be divisible by heads");
}

FeatureMap FeatureMap::zeros(std::size_t h, std::size_t w, std::size_t c) {
  return {h, w, c, Tensor({h, w, c}, 0.0)};
}

BraParams BraParams::identity(std::size_t embed_dim) {
  BraParams p{Tensor::matrix(embed_dim, embed_dim),
              Tensor::matrix(embed_dim, embed_dim),
              Tensor::matrix(embed_dim, embed_dim),
              Tensor::matrix(embed_dim, embed_dim)};
  for (std::size_t i = 0; i < embed_dim; ++i) {
    p.wq.at(i, i) = 1.0;
    p.wk.at(i, i) = 1.0;
    p.wv.at(i, i) = 1.0;
    p.wo.at(i, i) = 1.0;
  }
  return p;
}

BraParams BraParams::random(std::size_t embed_dim, std::uint64_t seed) {
  Rng rng(seed);
  const double bound = 1.0 / std::sqrt(static_cast<double>(embed_dim));
  auto draw = [&] {
    Tensor t = Tensor::matrix(embed_dim, embed_dim);
    for (double& v : t.data) v = rng.uniform(-bound, bound);
    return t;
  };
  return {draw(), draw(), draw(), draw()};
}

Tensor partition_regions(const FeatureMap& fm, std::size_t regions_per_side) {
  const Dims d = layout(fm, regions_per_side);
  Tensor out({d.regions, d.tokens_per_region, fm.channels}, 0.0);
  for (std::size_t bi = 0; bi < regions_per_side; ++bi)
    for (std::size_t bj = 0; bj < regions_per_side; ++bj) {
      const std::size_t region = bi * regions_per_side + bj;
      for (std::size_t r = 0; r < d.block_h; ++r)
        for (std::size_t c = 0; c < d.block_w; ++c) {
          const std::size_t token = r * d.block_w + c;
          for (std::size_t ch = 0; ch < fm.channels; ++ch)
            out.at(region, token, ch) =
                fm.values.at(bi * d.block_h + r, bj * d.block_w + c, ch);
        }
    }
  return out;
}

FeatureMap unpartition_regions(const Tensor& regions,
                               std::size_t regions_per_side,
                               std::size_t height, std::size_t width) {
  if (regions.ndim() != 3 ||
      regions.shape[0] != regions_per_side * regions_per_side)
    throw std::invalid_argument("unpartition_regions: bad region tensor");
  const std::size_t channels = regions.shape[2];
  const std::size_t block_h = height / regions_per_side;
  const std::size_t block_w = width / regions_per_side;
  if (block_h * block_w != regions.shape[1])
    throw std::invalid_argument("unpartition_regions: token count mismatch");
  FeatureMap fm = FeatureMap::zeros(height, width, channels);
  for (std::size_t bi = 0; bi < regions_per_side; ++bi)
    for (std::size_t bj = 0; bj < regions_per_side; ++bj) {
      const std::size_t region = bi * regions_per_side + bj;
      for (std::size_t r = 0; r < block_h; ++r)
        for (std::size_t c = 0; c < block_w; ++c)
          for (std::size_t ch = 0; ch < channels; ++ch)
            fm.values.at(bi * block_h + r, bj * block_w + c, ch) =
                regions.at(region, r * block_w + c, ch);
    }
  return fm;
}

std::tuple<Tensor, Tensor, Tensor> project_qkv(const Tensor& tokens,
                                               const BraParams& params) {
  return {matmul(tokens, params.wq), matmul(tokens, params.wk),
          matmul(tokens, params.wv)};
}

Tensor region_reps(const Tensor& regions) {
  if (regions.ndim() != 3)
    throw std::invalid_argument("region_reps: expected [R x T x C]");
  const std::size_t nr = regions.shape[0], nt = regions.shape[1],
                    nc = regions.shape[2];
  Tensor out = Tensor::matrix(nr, nc);
  for (std::size_t r = 0; r < nr; ++r)
    for (std::size_t c = 0; c < nc; ++c) {
      double acc = 0.0;
      for (std::size_t t = 0; t < nt; ++t) acc += regions.at(r, t, c);
      out.at(r, c) = acc / static_cast<double>(nt);
    }
  return out;
}

Tensor region_adjacency(const Tensor& qr, const Tensor& kr) {
  return matmul(qr, transpose(kr));
}

RoutingIndex topk_routing(const Tensor& adjacency, std::size_t k) {
  if (adjacency.ndim() != 2 || adjacency.shape[0] != adjacency.shape[1])
    throw std::invalid_argument("topk_routing: adjacency must be square");
  const std::size_t n = adjacency.shape[0];
  if (k == 0 || k > n)
    throw std::invalid_argument("topk_routing: k must be in [1, regions]");
  RoutingIndex routing(n);
  std::vector<std::size_t> order(n);
  for (std::size_t r = 0; r < n; ++r) {
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) {
                       return adjacency.at(r, a) > adjacency.at(r, b);
                     });
    routing[r].assign(order.begin(), order.begin() + static_cast<long>(k));
  }
  return routing;
}

std::pair<std::vector<Tensor>, std::vector<Tensor>> gather_kv(
    const Tensor& k_regions, const Tensor& v_regions,
    const RoutingIndex& routing) {
  if (k_regions.ndim() != 3 || !k_regions.same_shape(v_regions))
    throw std::invalid_argument("gather_kv: K and V must be [R x T x C]");
  const std::size_t nt = k_regions.shape[1], nc = k_regions.shape[2];
  std::vector<Tensor> kg, vg;
  kg.reserve(routing.size());
  vg.reserve(routing.size());
  for (const auto& routed : routing) {
    Tensor kr = Tensor::matrix(routed.size() * nt, nc);
    Tensor vr = Tensor::matrix(routed.size() * nt, nc);
    for (std::size_t j = 0; j < routed.size(); ++j) {
      if (routed[j] >= k_regions.shape[0])
        throw std::out_of_range("gather_kv: routed region out of range");
      for (std::size_t t = 0; t < nt; ++t)
        for (std::size_t c = 0; c < nc; ++c) {
          kr.at(j * nt + t, c) = k_regions.at(routed[j], t, c);
          vr.at(j * nt + t, c) = v_regions.at(routed[j], t, c);
        }
    }
    kg.push_back(std::move(kr));
    vg.push_back(std::move(vr));
  }
  return {std::move(kg), std::move(vg)};
}

Tensor token_attention(const Tensor& q, const Tensor& kg, const Tensor& vg,
                       const Tensor& wo, const BraConfig& cfg) {
  if (q.ndim() != 2 || kg.ndim() != 2 || vg.ndim() != 2 ||
      q.shape[1] != cfg.embed_dim || kg.shape[1] != cfg.embed_dim ||
      !kg.same_shape(vg))
    throw std::invalid_argument("token_attention: shape mismatch");
  if (kg.shape[0] == 0)
    throw std::invalid_argument("token_attention: no gathered tokens");
  const std::size_t head_dim = cfg.embed_dim / cfg.heads;
  const double scale = cfg.effective_scale();
  Tensor concat = Tensor::matrix(q.shape[0], cfg.embed_dim);
  for (std::size_t h = 0; h < cfg.heads; ++h) {
    const std::size_t c0 = h * head_dim, c1 = c0 + head_dim;
    const Tensor qh = slice_cols(q, c0, c1);
    const Tensor kh = slice_cols(kg, c0, c1);
    const Tensor vh = slice_cols(vg, c0, c1);
    Tensor scores = matmul(qh, transpose(kh));
    for (double& v : scores.data) v *= scale;
    const Tensor probs = softmax_rows(scores);
    const Tensor oh = matmul(probs, vh);
    for (std::size_t i = 0; i < oh.shape[0]; ++i)
      for (std::size_t c = 0; c < head_dim; ++c)
        concat.at(i, c0 + c) = oh.at(i, c);
  }
  return matmul(concat, wo);
}

namespace {

// Shared forward plumbing: token matrix plus projections.
struct ForwardCore {
  Dims dims;
  Tensor tokens;  // N x C
  Tensor q, k, v;  // each N x C
};

ForwardCore forward_core(const FeatureMap& fm, const BraParams& params,
                         const BraConfig& cfg) {
  cfg.validate();
  if (fm.channels != cfg.embed_dim)
    throw std::invalid_argument("feature map channels != embed_dim");
  ForwardCore fc{layout(fm, cfg.regions_per_side), {}, {}, {}, {}};
  Tensor regions = partition_regions(fm, cfg.regions_per_side);
  fc.tokens = Tensor({fc.dims.total_tokens, fm.channels}, 0.0);
  fc.tokens.data = regions.data;  // region-major token layout
  std::tie(fc.q, fc.k, fc.v) = project_qkv(fc.tokens, params);
  return fc;
}

Tensor as_regions3(const Tensor& tokens, const Dims& d) {
  Tensor r({d.regions, d.tokens_per_region, tokens.shape[1]}, 0.0);
  r.data = tokens.data;
  return r;
}

RoutingIndex compute_routing(const ForwardCore& fc, const BraConfig& cfg) {
  const Tensor qr = region_reps(as_regions3(fc.q, fc.dims));
  const Tensor kr = region_reps(as_regions3(fc.k, fc.dims));
  return topk_routing(region_adjacency(qr, kr), cfg.top_k);
}

}  // namespace

FeatureMap bra_forward_with_routing(const FeatureMap& fm,
                                    const BraParams& params,
                                    const BraConfig& cfg,
                                    const RoutingIndex& routing) {
  const ForwardCore fc = forward_core(fm, params, cfg);
  if (routing.size() != fc.dims.regions)
    throw std::invalid_argument("routing size != region count");
  const auto [kg, vg] =
      gather_kv(as_regions3(fc.k, fc.dims), as_regions3(fc.v, fc.dims), routing);
  Tensor out_tokens = Tensor::matrix(fc.dims.total_tokens, fm.channels);
  for (std::size_t r = 0; r < fc.dims.regions; ++r) {
    const Tensor qr =
        slice_rows(fc.q, r * fc.dims.tokens_per_region, fc.dims.tokens_per_region);
    const Tensor o = token_attention(qr, kg[r], vg[r], params.wo, cfg);
    for (std::size_t t = 0; t < fc.dims.tokens_per_region; ++t)
      for (std::size_t c = 0; c < fm.channels; ++c)
        out_tokens.at(r * fc.dims.tokens_per_region + t, c) = o.at(t, c);
  }
  return unpartition_regions(as_regions3(out_tokens, fc.dims),
                             cfg.regions_per_side, fm.height, fm.width);
}

BraOutput bra_forward(const FeatureMap& fm, const BraParams& params,
                      const BraConfig& cfg) {
  const ForwardCore fc = forward_core(fm, params, cfg);
  RoutingIndex routing = compute_routing(fc, cfg);
  FeatureMap out = bra_forward_with_routing(fm, params, cfg, routing);
  return {std::move(out), std::move(routing)};
}

BraGrads bra_backward(const FeatureMap& fm, const BraParams& params,
                      const BraConfig& cfg, const Tensor& upstream) {
  if (!upstream.same_shape(fm.values))
    throw std::invalid_argument("bra_backward: upstream shape mismatch");
  const ForwardCore fc = forward_core(fm, params, cfg);
  const RoutingIndex routing = compute_routing(fc, cfg);
  const Dims& d = fc.dims;
  const std::size_t nc = fm.channels;
  const std::size_t head_dim = nc / cfg.heads;
  const double scale = cfg.effective_scale();

  const auto [kg, vg] =
      gather_kv(as_regions3(fc.k, d), as_regions3(fc.v, d), routing);

  // upstream in region-major token layout
  FeatureMap up_fm{fm.height, fm.width, nc, upstream};
  Tensor d_out_tokens = Tensor({d.total_tokens, nc}, 0.0);
  d_out_tokens.data = partition_regions(up_fm, cfg.regions_per_side).data;

  // forward attention outputs before the Wo projection, for dWo
  Tensor concat_all = Tensor::matrix(d.total_tokens, nc);
  // per region and head the softmax probabilities, replayed in the backward
  std::vector<std::vector<Tensor>> probs(d.regions);

  for (std::size_t r = 0; r < d.regions; ++r) {
    const Tensor qr = slice_rows(fc.q, r * d.tokens_per_region, d.tokens_per_region);
    probs[r].reserve(cfg.heads);
    for (std::size_t h = 0; h < cfg.heads; ++h) {
      const std::size_t c0 = h * head_dim, c1 = c0 + head_dim;
      Tensor scores = matmul(slice_cols(qr, c0, c1),
                             transpose(slice_cols(kg[r], c0, c1)));
      for (double& v : scores.data) v *= scale;
      Tensor p = softmax_rows(scores);
      const Tensor oh = matmul(p, slice_cols(vg[r], c0, c1));
      for (std::size_t t = 0; t < d.tokens_per_region; ++t)
        for (std::size_t c = 0; c < head_dim; ++c)
          concat_all.at(r * d.tokens_per_region + t, c0 + c) = oh.at(t, c);
      probs[r].push_back(std::move(p));
    }
  }

  BraGrads grads;
  grads.grad_params.wo = matmul(transpose(concat_all), d_out_tokens);
  const Tensor d_concat = matmul(d_out_tokens, transpose(params.wo));

  Tensor dq = Tensor::matrix(d.total_tokens, nc);
  Tensor dk = Tensor::matrix(d.total_tokens, nc);
  Tensor dv = Tensor::matrix(d.total_tokens, nc);

  for (std::size_t r = 0; r < d.regions; ++r) {
    const Tensor qr = slice_rows(fc.q, r * d.tokens_per_region, d.tokens_per_region);
    const Tensor d_concat_r =
        slice_rows(d_concat, r * d.tokens_per_region, d.tokens_per_region);
    for (std::size_t h = 0; h < cfg.heads; ++h) {
      const std::size_t c0 = h * head_dim, c1 = c0 + head_dim;
      const Tensor& p = probs[r][h];
      const Tensor doh = slice_cols(d_concat_r, c0, c1);
      const Tensor kh = slice_cols(kg[r], c0, c1);
      const Tensor vh = slice_cols(vg[r], c0, c1);

      const Tensor dvg_h = matmul(transpose(p), doh);
      const Tensor dp = matmul(doh, transpose(vh));
      Tensor ds = softmax_backward(p, dp);
      for (double& v : ds.data) v *= scale;

      const Tensor dq_h = matmul(ds, kh);
      const Tensor dkg_h = matmul(transpose(ds), slice_cols(qr, c0, c1));

      for (std::size_t t = 0; t < d.tokens_per_region; ++t)
        for (std::size_t c = 0; c < head_dim; ++c)
          dq.at(r * d.tokens_per_region + t, c0 + c) += dq_h.at(t, c);

      // scatter gathered-token gradients back to their source regions
      for (std::size_t j = 0; j < routing[r].size(); ++j) {
        const std::size_t src = routing[r][j] * d.tokens_per_region;
        for (std::size_t t = 0; t < d.tokens_per_region; ++t)
          for (std::size_t c = 0; c < head_dim; ++c) {
            dk.at(src + t, c0 + c) += dkg_h.at(j * d.tokens_per_region + t, c);
            dv.at(src + t, c0 + c) += dvg_h.at(j * d.tokens_per_region + t, c);
          }
      }
    }
  }

  grads.grad_params.wq = matmul(transpose(fc.tokens), dq);
  grads.grad_params.wk = matmul(transpose(fc.tokens), dk);
  grads.grad_params.wv = matmul(transpose(fc.tokens), dv);

  Tensor d_tokens = matmul(dq, transpose(params.wq));
  const Tensor dtk = matmul(dk, transpose(params.wk));
  const Tensor dtv = matmul(dv, transpose(params.wv));
  for (std::size_t i = 0; i < d_tokens.size(); ++i)
    d_tokens.data[i] += dtk.data[i] + dtv.data[i];

  grads.grad_fm = unpartition_regions(as_regions3(d_tokens, d),
                                      cfg.regions_per_side, fm.height, fm.width)
                      .values;
  return grads;
}

FeatureMap read_feature_map(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open feature map file: " + path.string());
  std::size_t h = 0, w = 0, c = 0;
  if (!(in >> h >> w >> c) || h == 0 || w == 0 || c == 0)
    throw std::runtime_error("bad feature map header in " + path.string());
  FeatureMap fm = FeatureMap::zeros(h, w, c);
  for (double& v : fm.values.data)
    if (!(in >> v))
      throw std::runtime_error("feature map " + path.string() +
                               ": expected " + std::to_string(fm.values.size()) +
                               " values");
  return fm;
}

void write_feature_map(const std::filesystem::path& path, const FeatureMap& fm) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write feature map file: " + path.string());
  out << fm.height << ' ' << fm.width << ' ' << fm.channels << '\n';
  const std::size_t row = fm.width * fm.channels;
  for (std::size_t i = 0; i < fm.values.size(); ++i) {
    out << format_double(fm.values.data[i]);
    out << (((i + 1) % row == 0) ? '\n' : ' ');
  }
}

}  // namespace detkit::bra
