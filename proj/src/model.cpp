#include "dolfin/model.hpp"

#include <cmath>
#include <cstring>
#include <string>

#include "dolfin/linalg.hpp"
#include "dolfin/rng.hpp"

namespace dolfin {

namespace la = linalg;

void BackboneConfig::validate() const {
    if (embed_dim < 2) throw ConfigError("backbone: embed_dim must be >= 2");
    if (num_layers < 1) throw ConfigError("backbone: num_layers must be >= 1");
    if (num_tokens < 2) throw ConfigError("backbone: num_tokens must be >= 2");
    if (input_dim < 1) throw ConfigError("backbone: input_dim must be >= 1");
    if (input_dim % (num_tokens - 1) != 0) {
        throw ConfigError("backbone: input_dim " + std::to_string(input_dim) +
                          " not divisible by num_tokens-1 = " + std::to_string(num_tokens - 1));
    }
}

namespace {

DenseMatrix random_scaled(SplitMix64& rng, int rows, int cols, double scale) {
    DenseMatrix m(rows, cols);
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j) m(i, j) = scale * rng.gaussian();
    return m;
}

inline double gelu(double x) {
    return 0.5 * x * (1.0 + std::erf(x * 0.7071067811865475244));
}

inline double gelu_prime(double x) {
    return 0.5 * (1.0 + std::erf(x * 0.7071067811865475244)) +
           x * std::exp(-0.5 * x * x) * 0.3989422804014326779;
}

}  // namespace

Backbone init_backbone(const BackboneConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    Backbone b;
    b.cfg = cfg;
    const int d = cfg.embed_dim;
    const int hidden = cfg.hidden();
    const double scale = 1.0 / std::sqrt(static_cast<double>(d));
    SplitMix64 rng(derive_seed(seed, 0xB0DE));
    for (int l = 0; l < cfg.num_layers; ++l) {
        LayerWeights w;
        w.wq = random_scaled(rng, d, d, scale);
        w.wk = random_scaled(rng, d, d, scale);
        w.wv = random_scaled(rng, d, d, scale);
        w.wo = random_scaled(rng, d, d, scale);
        w.w1 = random_scaled(rng, hidden, d, scale);
        w.w2 = random_scaled(rng, d, hidden, scale);
        b.layers.push_back(std::move(w));
    }
    b.patch_embed = random_scaled(rng, d, cfg.patch_dim(), scale);
    b.class_token.resize(static_cast<std::size_t>(d));
    for (double& v : b.class_token) v = scale * rng.gaussian();
    return b;
}

std::uint64_t backbone_checksum(const Backbone& b) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto mix = [&h](const double* p, std::size_t n) {
        for (std::size_t i = 0; i < n; ++i) {
            std::uint64_t bits;
            std::memcpy(&bits, &p[i], sizeof bits);
            h ^= bits;
            h *= 0x100000001b3ULL;
        }
    };
    for (const auto& w : b.layers) {
        for (const DenseMatrix* m : {&w.wq, &w.wk, &w.wv, &w.wo, &w.w1, &w.w2}) {
            mix(m->data().data(), m->data().size());
        }
    }
    mix(b.patch_embed.data().data(), b.patch_embed.data().size());
    mix(b.class_token.data(), b.class_token.size());
    return h;
}

ModelState make_model(std::shared_ptr<const Backbone> backbone) {
    ModelState m;
    const int d = backbone->cfg.embed_dim;
    for (int l = 0; l < backbone->cfg.num_layers; ++l) {
        m.merged_delta_k.emplace_back(d, d);
        m.merged_delta_v.emplace_back(d, d);
    }
    m.head = DenseMatrix(0, d);
    m.backbone = std::move(backbone);
    return m;
}

ModelState begin_task(const ModelState& model,
                      const std::vector<std::pair<DenseMatrix, DenseMatrix>>& a_bases,
                      int new_classes) {
    if (new_classes < 1) throw ConfigError("begin_task: new_classes must be >= 1");
    const auto& cfg = model.backbone->cfg;
    if (static_cast<int>(a_bases.size()) != cfg.num_layers) {
        throw DimensionError("begin_task: expected one adapter pair per layer");
    }
    ModelState next = model;
    next.adapters.clear();
    for (const auto& [ak, av] : a_bases) {
        for (const DenseMatrix* a : {&ak, &av}) {
            if (a->rows() != cfg.embed_dim) {
                throw DimensionError("begin_task: adapter basis rows " + a->shape_string() +
                                     " vs embed_dim " + std::to_string(cfg.embed_dim));
            }
            if (la::orthonormality_defect(*a) > 1e-8) {
                throw ContractViolation("begin_task: adapter basis columns are not orthonormal");
            }
        }
        LayerAdapters la;
        la.key = {ak, DenseMatrix(ak.cols(), cfg.embed_dim)};
        la.value = {av, DenseMatrix(av.cols(), cfg.embed_dim)};
        next.adapters.push_back(std::move(la));
    }
    next.has_adapters = true;
    DenseMatrix head(model.head.rows() + new_classes, cfg.embed_dim);
    for (int i = 0; i < model.head.rows(); ++i)
        for (int j = 0; j < cfg.embed_dim; ++j) head(i, j) = model.head(i, j);
    next.head = std::move(head);
    next.task_index = model.task_index + 1;
    next.classes_per_task.push_back(new_classes);
    return next;
}

CaptureSink::CaptureSink(int num_layers, int dim, int cap, std::uint64_t seed) {
    for (int l = 0; l < num_layers; ++l) {
        buffers.push_back({ActivationBuffer(l, Projection::Key, dim, cap,
                                            derive_seed(seed, (std::uint64_t)l, 0)),
                           ActivationBuffer(l, Projection::Value, dim, cap,
                                            derive_seed(seed, (std::uint64_t)l, 1))});
    }
}

void CaptureSink::offer(int layer, const std::vector<double>& column) {
    buffers[static_cast<std::size_t>(layer)][0].offer(column);
    buffers[static_cast<std::size_t>(layer)][1].offer(column);
}

void CaptureSink::clear() {
    for (auto& pair : buffers) {
        pair[0].clear();
        pair[1].clear();
    }
}

namespace {

struct LayerCache {
    DenseMatrix x;     // d x s, layer input tokens
    DenseMatrix q, k, v;
    DenseMatrix attn;  // s x s, softmax weights (column per query)
    DenseMatrix o;     // d x s, attention output
    DenseMatrix y;     // d x s, after output projection + residual
    DenseMatrix u1;    // hidden x s, pre-GELU
    DenseMatrix g;     // hidden x s, post-GELU
};

struct SampleCache {
    std::vector<LayerCache> layers;
    std::vector<double> cls_out;  // d, class-token output of the last layer
};

DenseMatrix embed_tokens(const ModelState& model, const DenseMatrix& batch, int row) {
    const auto& bb = *model.backbone;
    const int d = bb.cfg.embed_dim;
    const int s = bb.cfg.num_tokens;
    const int pd = bb.cfg.patch_dim();
    DenseMatrix x(d, s);
    for (int i = 0; i < d; ++i) x(i, 0) = bb.class_token[static_cast<std::size_t>(i)];
    for (int t = 1; t < s; ++t) {
        for (int i = 0; i < d; ++i) {
            double acc = 0.0;
            for (int j = 0; j < pd; ++j) acc += bb.patch_embed(i, j) * batch(row, (t - 1) * pd + j);
            x(i, t) = acc;
        }
    }
    return x;
}

// K (or V) projection with the merged delta and current LoRA branch.
DenseMatrix project_kv(const DenseMatrix& w, const DenseMatrix& delta, const LoraAdapter* lora,
                       const DenseMatrix& x) {
    DenseMatrix out = la::matmul(w, x) + la::matmul(delta, x);
    if (lora && lora->a.cols() > 0) {
        out += la::matmul(lora->a, la::matmul(lora->b, x));
    }
    return out;
}

SampleCache forward_sample(const ModelState& model, const DenseMatrix& batch, int row,
                           CaptureSink* capture) {
    const auto& bb = *model.backbone;
    const int d = bb.cfg.embed_dim;
    const int s = bb.cfg.num_tokens;
    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
    SampleCache cache;
    DenseMatrix x = embed_tokens(model, batch, row);
    for (int l = 0; l < bb.cfg.num_layers; ++l) {
        const auto& w = bb.layers[static_cast<std::size_t>(l)];
        const LoraAdapter* lk = nullptr;
        const LoraAdapter* lv = nullptr;
        if (model.has_adapters) {
            lk = &model.adapters[static_cast<std::size_t>(l)].key;
            lv = &model.adapters[static_cast<std::size_t>(l)].value;
        }
        if (capture) {
            std::vector<double> col(static_cast<std::size_t>(d));
            for (int t = 0; t < s; ++t) {
                for (int i = 0; i < d; ++i) col[static_cast<std::size_t>(i)] = x(i, t);
                capture->offer(l, col);
            }
        }
        LayerCache lc;
        lc.x = x;
        lc.q = la::matmul(w.wq, x);
        lc.k = project_kv(w.wk, model.merged_delta_k[static_cast<std::size_t>(l)], lk, x);
        lc.v = project_kv(w.wv, model.merged_delta_v[static_cast<std::size_t>(l)], lv, x);
        // Scores: S(j, i) = K_j . Q_i / sqrt(d); softmax over j per column.
        DenseMatrix scores = la::matmul(lc.k.transpose(), lc.q);
        scores *= inv_sqrt_d;
        lc.attn = DenseMatrix(s, s);
        for (int i = 0; i < s; ++i) {
            double mx = scores(0, i);
            for (int j = 1; j < s; ++j) mx = std::max(mx, scores(j, i));
            double sum = 0.0;
            for (int j = 0; j < s; ++j) {
                double e = std::exp(scores(j, i) - mx);
                lc.attn(j, i) = e;
                sum += e;
            }
            for (int j = 0; j < s; ++j) lc.attn(j, i) /= sum;
        }
        lc.o = la::matmul(lc.v, lc.attn);
        lc.y = la::matmul(w.wo, lc.o) + x;
        lc.u1 = la::matmul(w.w1, lc.y);
        lc.g = lc.u1;
        for (double& val : lc.g.data()) val = gelu(val);
        DenseMatrix z = la::matmul(w.w2, lc.g) + lc.y;
        cache.layers.push_back(std::move(lc));
        x = std::move(z);
    }
    cache.cls_out.resize(static_cast<std::size_t>(d));
    for (int i = 0; i < d; ++i) cache.cls_out[static_cast<std::size_t>(i)] = x(i, 0);
    return cache;
}

}  // namespace

DenseMatrix forward(const ModelState& model, const DenseMatrix& batch, CaptureSink* capture) {
    const auto& cfg = model.backbone->cfg;
    if (batch.cols() != cfg.input_dim) {
        throw DimensionError("forward: batch columns " + batch.shape_string() +
                             " vs input_dim " + std::to_string(cfg.input_dim));
    }
    DenseMatrix logits(batch.rows(), model.classes_seen());
    for (int n = 0; n < batch.rows(); ++n) {
        SampleCache cache = forward_sample(model, batch, n, capture);
        for (int c = 0; c < model.classes_seen(); ++c) {
            double acc = 0.0;
            for (int j = 0; j < cfg.embed_dim; ++j)
                acc += model.head(c, j) * cache.cls_out[static_cast<std::size_t>(j)];
            logits(n, c) = acc;
        }
    }
    return logits;
}

GradientSet loss_and_grads(const ModelState& model, const DenseMatrix& batch,
                           const std::vector<int>& labels, int class_lo, int class_hi,
                           CaptureSink* capture) {
    const auto& bb = *model.backbone;
    const int d = bb.cfg.embed_dim;
    const int s = bb.cfg.num_tokens;
    const int active = class_hi - class_lo;
    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
    if (batch.cols() != bb.cfg.input_dim) {
        throw DimensionError("loss_and_grads: batch columns " + batch.shape_string() +
                             " vs input_dim " + std::to_string(bb.cfg.input_dim));
    }
    if (static_cast<int>(labels.size()) != batch.rows()) {
        throw DataError("loss_and_grads: label count does not match batch rows");
    }
    if (class_lo < 0 || class_hi > model.classes_seen() || active < 1) {
        throw DataError("loss_and_grads: invalid active class range");
    }
    for (int lab : labels) {
        if (lab < class_lo || lab >= class_hi) {
            throw DataError("loss_and_grads: label " + std::to_string(lab) +
                            " outside active range [" + std::to_string(class_lo) + ", " +
                            std::to_string(class_hi) + ")");
        }
    }

    GradientSet grads;
    for (int l = 0; l < bb.cfg.num_layers; ++l) {
        int rk = model.has_adapters ? model.adapters[static_cast<std::size_t>(l)].key.a.cols() : 0;
        int rv = model.has_adapters ? model.adapters[static_cast<std::size_t>(l)].value.a.cols() : 0;
        grads.db_k.emplace_back(rk, d);
        grads.db_v.emplace_back(rv, d);
    }
    grads.d_head = DenseMatrix(active, d);

    const double inv_n = 1.0 / static_cast<double>(batch.rows());
    for (int n = 0; n < batch.rows(); ++n) {
        SampleCache cache = forward_sample(model, batch, n, capture);
        // Cross-entropy over the active slice.
        std::vector<double> p(static_cast<std::size_t>(active));
        double mx = -1e300;
        for (int c = 0; c < active; ++c) {
            double acc = 0.0;
            for (int j = 0; j < d; ++j)
                acc += model.head(class_lo + c, j) * cache.cls_out[static_cast<std::size_t>(j)];
            p[static_cast<std::size_t>(c)] = acc;
            mx = std::max(mx, acc);
        }
        double sum = 0.0;
        for (double& v : p) {
            v = std::exp(v - mx);
            sum += v;
        }
        for (double& v : p) v /= sum;
        int lab = labels[static_cast<std::size_t>(n)] - class_lo;
        grads.loss -= inv_n * std::log(std::max(p[static_cast<std::size_t>(lab)], 1e-300));

        // d logits and head/class-token gradients.
        std::vector<double> dcls(static_cast<std::size_t>(d), 0.0);
        for (int c = 0; c < active; ++c) {
            double dl = inv_n * (p[static_cast<std::size_t>(c)] - (c == lab ? 1.0 : 0.0));
            for (int j = 0; j < d; ++j) {
                grads.d_head(c, j) += dl * cache.cls_out[static_cast<std::size_t>(j)];
                dcls[static_cast<std::size_t>(j)] += dl * model.head(class_lo + c, j);
            }
        }

        DenseMatrix dz(d, s);
        for (int j = 0; j < d; ++j) dz(j, 0) = dcls[static_cast<std::size_t>(j)];
        for (int l = bb.cfg.num_layers - 1; l >= 0; --l) {
            const auto& w = bb.layers[static_cast<std::size_t>(l)];
            const LayerCache& lc = cache.layers[static_cast<std::size_t>(l)];
            // MLP block.
            DenseMatrix dg = la::matmul(w.w2.transpose(), dz);
            DenseMatrix du1 = dg;
            for (std::size_t i = 0; i < du1.data().size(); ++i)
                du1.data()[i] *= gelu_prime(lc.u1.data()[i]);
            DenseMatrix dy = dz + la::matmul(w.w1.transpose(), du1);
            // Attention block.
            DenseMatrix dx = dy;  // residual
            DenseMatrix dout = la::matmul(w.wo.transpose(), dy);
            DenseMatrix dv = la::matmul(dout, lc.attn.transpose());
            DenseMatrix dattn = la::matmul(lc.v.transpose(), dout);
            DenseMatrix dscores(s, s);
            for (int i = 0; i < s; ++i) {
                double dot = 0.0;
                for (int j = 0; j < s; ++j) dot += lc.attn(j, i) * dattn(j, i);
                for (int j = 0; j < s; ++j)
                    dscores(j, i) = lc.attn(j, i) * (dattn(j, i) - dot);
            }
            DenseMatrix dk = la::matmul(lc.q, dscores.transpose());
            dk *= inv_sqrt_d;
            DenseMatrix dq = la::matmul(lc.k, dscores);
            dq *= inv_sqrt_d;
            dx += la::matmul(w.wq.transpose(), dq);
            // K path: effective dense weight plus the LoRA branch.
            dx += la::matmul(w.wk.transpose(), dk);
            dx += la::matmul(model.merged_delta_k[static_cast<std::size_t>(l)].transpose(), dk);
            dx += la::matmul(w.wv.transpose(), dv);
            dx += la::matmul(model.merged_delta_v[static_cast<std::size_t>(l)].transpose(), dv);
            if (model.has_adapters) {
                const auto& ad = model.adapters[static_cast<std::size_t>(l)];
                if (ad.key.a.cols() > 0) {
                    DenseMatrix atk = la::matmul(ad.key.a.transpose(), dk);  // r x s
                    grads.db_k[static_cast<std::size_t>(l)] += la::matmul(atk, lc.x.transpose());
                    dx += la::matmul(ad.key.b.transpose(), atk);
                }
                if (ad.value.a.cols() > 0) {
                    DenseMatrix atv = la::matmul(ad.value.a.transpose(), dv);
                    grads.db_v[static_cast<std::size_t>(l)] += la::matmul(atv, lc.x.transpose());
                    dx += la::matmul(ad.value.b.transpose(), atv);
                }
            }
            dz = std::move(dx);
        }
    }
    return grads;
}

OptimizerState OptimizerState::fresh(const ModelState& model, int active_classes) {
    OptimizerState opt;
    const int d = model.backbone->cfg.embed_dim;
    for (int l = 0; l < model.backbone->cfg.num_layers; ++l) {
        int rk = model.has_adapters ? model.adapters[static_cast<std::size_t>(l)].key.a.cols() : 0;
        int rv = model.has_adapters ? model.adapters[static_cast<std::size_t>(l)].value.a.cols() : 0;
        opt.m_bk.emplace_back(rk, d);
        opt.v_bk.emplace_back(rk, d);
        opt.m_bv.emplace_back(rv, d);
        opt.v_bv.emplace_back(rv, d);
    }
    opt.m_head = DenseMatrix(active_classes, d);
    opt.v_head = DenseMatrix(active_classes, d);
    return opt;
}

namespace {

void adamw_tensor(DenseMatrix& param, const DenseMatrix& grad, DenseMatrix& m, DenseMatrix& v,
                  double lr, const AdamWParams& p, long step) {
    const double bc1 = 1.0 - std::pow(p.beta1, static_cast<double>(step));
    const double bc2 = 1.0 - std::pow(p.beta2, static_cast<double>(step));
    for (std::size_t i = 0; i < param.data().size(); ++i) {
        double g = grad.data()[i];
        double mi = p.beta1 * m.data()[i] + (1.0 - p.beta1) * g;
        double vi = p.beta2 * v.data()[i] + (1.0 - p.beta2) * g * g;
        m.data()[i] = mi;
        v.data()[i] = vi;
        double update = (mi / bc1) / (std::sqrt(vi / bc2) + p.eps);
        param.data()[i] -= lr * update + lr * p.weight_decay * param.data()[i];
    }
}

}  // namespace

void apply_adamw(ModelState& model, const GradientSet& grads, OptimizerState& opt,
                 const AdamWParams& p, int class_lo) {
    ++opt.step;
    if (model.has_adapters) {
        for (std::size_t l = 0; l < model.adapters.size(); ++l) {
            adamw_tensor(model.adapters[l].key.b, grads.db_k[l], opt.m_bk[l], opt.v_bk[l],
                         p.lr_adapter, p, opt.step);
            adamw_tensor(model.adapters[l].value.b, grads.db_v[l], opt.m_bv[l], opt.v_bv[l],
                         p.lr_adapter, p, opt.step);
        }
    }
    const int active = grads.d_head.rows();
    const int d = model.backbone->cfg.embed_dim;
    DenseMatrix rows(active, d);
    for (int i = 0; i < active; ++i)
        for (int j = 0; j < d; ++j) rows(i, j) = model.head(class_lo + i, j);
    adamw_tensor(rows, grads.d_head, opt.m_head, opt.v_head, p.lr_head, p, opt.step);
    for (int i = 0; i < active; ++i)
        for (int j = 0; j < d; ++j) model.head(class_lo + i, j) = rows(i, j);
}

ModelState merge_current_task(const ModelState& model) {
    if (!model.has_adapters) {
        throw StateError("merge_current_task: no current adapters (double merge?)");
    }
    ModelState next = model;
    for (std::size_t l = 0; l < model.adapters.size(); ++l) {
        const auto& ad = model.adapters[l];
        if (ad.key.a.cols() > 0) next.merged_delta_k[l] += la::matmul(ad.key.a, ad.key.b);
        if (ad.value.a.cols() > 0) next.merged_delta_v[l] += la::matmul(ad.value.a, ad.value.b);
    }
    next.adapters.clear();
    next.has_adapters = false;
    return next;
}

}  // namespace dolfin
