#include "proxytrain/aux_losses.hpp"

#include <cmath>
#include <fstream>

#include "proxytrain/errors.hpp"

namespace proxytrain {

PseudoLabelSet::PseudoLabelSet(std::vector<int> l, int k) : labels(std::move(l)), n_classes(k) {
    if (n_classes < 1) throw ValueError("PseudoLabelSet: need n_classes >= 1");
    for (int y : labels) {
        if (y != IGNORE && (y < 0 || y >= n_classes)) {
            throw ValueError("PseudoLabelSet: label " + std::to_string(y) + " outside [0," +
                             std::to_string(n_classes) + ") and not IGNORE");
        }
    }
}

double PseudoLabelSet::fraction_ignored() const {
    if (labels.empty()) return 0.0;
    std::size_t n = 0;
    for (int y : labels) n += (y == IGNORE);
    return static_cast<double>(n) / static_cast<double>(labels.size());
}

std::uint64_t PseudoLabelSet::checksum() const {
    std::uint64_t h = fnv1a(&n_classes, sizeof(n_classes));
    return fnv1a(labels.data(), labels.size() * sizeof(int), h);
}

void PseudoLabelSet::save(const std::filesystem::path& path) const {
    std::ofstream os(path);
    if (!os) throw IoError("PseudoLabelSet: cannot open " + path.string());
    os << "n: " << labels.size() << " k: " << n_classes << "\n";
    for (int y : labels) os << y << "\n";
}

PseudoLabelSet PseudoLabelSet::load(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw IoError("PseudoLabelSet: cannot open " + path.string());
    std::string tok;
    std::size_t n = 0;
    int k = 0;
    if (!(is >> tok) || tok != "n:" || !(is >> n) || !(is >> tok) || tok != "k:" || !(is >> k)) {
        throw IoError("PseudoLabelSet: malformed header in " + path.string());
    }
    std::vector<int> labels(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (!(is >> labels[i])) throw IoError("PseudoLabelSet: truncated file " + path.string());
    }
    return PseudoLabelSet(std::move(labels), k);
}

TeacherState TeacherState::from_student(const std::vector<Parameter>& student, double beta_ema) {
    if (!(beta_ema >= 0.0 && beta_ema <= 1.0)) throw ValueError("TeacherState: beta in [0,1]");
    TeacherState t;
    t.beta_ema = beta_ema;
    t.params.reserve(student.size());
    for (const Parameter& p : student) t.params.push_back(p.value);
    return t;
}

TeacherState ema_update(const TeacherState& teacher, const std::vector<Parameter>& student) {
    if (teacher.params.size() != student.size()) {
        throw ShapeError("ema_update: teacher has " + std::to_string(teacher.params.size()) +
                         " tensors, student " + std::to_string(student.size()));
    }
    TeacherState out;
    out.beta_ema = teacher.beta_ema;
    out.params.reserve(student.size());
    const double b = teacher.beta_ema;
    for (std::size_t i = 0; i < student.size(); ++i) {
        require_same_shape(teacher.params[i], student[i].value, "ema_update");
        out.params.push_back(
            t_add(t_scale(teacher.params[i], b), t_scale(student[i].value, 1.0 - b)));
    }
    return out;
}

Var self_perturbation_loss(const Var& z, const Var& z_star) {
    require_same_shape(z.value(), z_star.value(), "self_perturbation_loss");
    Var d = sub(z, z_star);
    return mean(mul(d, d));
}

Var contrastive_loss(const Var& z_i, const Var& z_j, bool same, double margin) {
    require_same_shape(z_i.value(), z_j.value(), "contrastive_loss");
    Var d = sub(z_i, z_j);
    Var dist = mean(mul(d, d));
    if (same) return dist;
    // hinge; derivative is 0 exactly at the boundary
    return relu(add(neg(dist), margin));
}

Var masked_cross_entropy(const Var& logits, const PseudoLabelSet& y) {
    const Tensor& o = logits.value();
    if (o.rank() != 2) throw ShapeError("masked_cross_entropy: logits must be [N x K]");
    const std::size_t n = o.dim(0), k = o.dim(1);
    if (y.labels.size() != n) {
        throw ShapeError("masked_cross_entropy: " + std::to_string(y.labels.size()) +
                         " labels for " + std::to_string(n) + " rows");
    }
    if (static_cast<std::size_t>(y.n_classes) != k) {
        throw ShapeError("masked_cross_entropy: labels expect " + std::to_string(y.n_classes) +
                         " classes, logits have " + std::to_string(k));
    }
    std::vector<int> clamped(n);
    std::vector<double> keep(n);
    std::size_t n_kept = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const bool ignored = (y.labels[i] == PseudoLabelSet::IGNORE);
        clamped[i] = ignored ? 0 : y.labels[i];
        keep[i] = ignored ? 0.0 : 1.0;
        n_kept += !ignored;
    }
    if (n_kept == 0) throw ValueError("masked_cross_entropy: all labels are IGNORE");
    Var picked = gather_rows(log_softmax_rows(logits), clamped);  // [N]
    Var masked = mul(picked, Var(Tensor({n}, std::move(keep))));
    return scale(sum(masked), -1.0 / static_cast<double>(n_kept));
}

Var consistency_feature_loss(const Var& f_student, const Var& f_teacher, double p_drop, Rng& rng) {
    auto pool = [](const Var& f) {
        if (f.value().rank() == 2) return f;
        if (f.value().rank() != 3) {
            throw ShapeError("consistency_feature_loss: need [B x E] or [B x S x E], got " +
                             f.value().shape_str());
        }
        // spatial mean == k-max pooling with k = S
        return global_k_max_pool(f, f.value().dim(1));
    };
    Var fs = pool(f_student);
    Var ft = pool(f_teacher);
    require_same_shape(fs.value(), ft.value(), "consistency_feature_loss");
    Var ds = dropout(fs, p_drop, rng, true);
    Var dt = dropout(ft, p_drop, rng, true);
    return mean(vabs(sub(ds, dt)));
}

PseudoLabelSet erase_low_confidence(const Tensor& probs, double phi) {
    if (probs.rank() != 2) throw ShapeError("erase_low_confidence: need [N x K] probabilities");
    if (!(phi >= 0.0 && phi <= 1.0)) throw ValueError("erase_low_confidence: phi in [0,1]");
    const std::size_t n = probs.dim(0), k = probs.dim(1);
    std::vector<int> labels(n);
    for (std::size_t i = 0; i < n; ++i) {
        double s = 0.0, best = -1.0;
        std::size_t arg = 0;
        for (std::size_t j = 0; j < k; ++j) {
            const double p = probs[i * k + j];
            if (p < 0.0 || p > 1.0 + 1e-9) {
                throw ValueError("erase_low_confidence: entry " + std::to_string(p) +
                                 " is not a probability (row " + std::to_string(i) + ")");
            }
            s += p;
            if (p > best) {
                best = p;
                arg = j;
            }
        }
        if (std::abs(s - 1.0) > 1e-6) {
            throw ValueError("erase_low_confidence: row " + std::to_string(i) + " sums to " +
                             std::to_string(s) + ", not 1");
        }
        labels[i] = (best >= phi) ? static_cast<int>(arg) : PseudoLabelSet::IGNORE;
    }
    return PseudoLabelSet(std::move(labels), static_cast<int>(k));
}

Tensor soften_logits(const Tensor& logits, InverseTemperature beta) {
    if (logits.rank() == 1) {
        Tensor rows({1, logits.dim(0)}, {logits.data().begin(), logits.data().end()});
        Tensor p = soften_logits(rows, beta);
        return Tensor({logits.dim(0)}, {p.data().begin(), p.data().end()});
    }
    if (logits.rank() != 2) throw ShapeError("soften_logits: need [K] or [N x K]");
    return softmax_rows(scale(Var(logits), beta.beta)).value();
}

}  // namespace proxytrain
