#include "idprior/core/autograd.hpp"

#include "idprior/core/errors.hpp"

#include <cmath>
#include <limits>

namespace idprior::ag {

namespace {

constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;

void require(bool ok, const char* what) {
    if (!ok) throw ShapeError(what);
}

}  // namespace

Mat& Node::grad_buffer() {
    if (grad.size() == 0) grad = Mat::Zero(value().rows(), value().cols());
    return grad;
}

Var Tape::constant(Mat value) {
    return Var(make(std::move(value), false));
}

Node* Tape::make(Mat value, bool needs_grad) {
    Node& n = nodes_.emplace_back();
    n.data = std::move(value);
    n.needs_grad = needs_grad;
    return &n;
}

Var Tape::param(Parameter& p) {
    if (auto it = param_nodes_.find(&p); it != param_nodes_.end()) return Var(it->second);
    Node& n = nodes_.emplace_back();
    n.ref = &p.value;
    n.needs_grad = p.trainable;
    if (p.trainable) {
        n.param = &p;
        Node* self = &n;
        n.backward = [self] { self->param->grad += self->grad; };
    }
    param_nodes_.emplace(&p, &n);
    return Var(&n);
}

Var Tape::param(const Parameter& p) {
    if (auto it = param_nodes_.find(&p); it != param_nodes_.end()) return Var(it->second);
    Node& n = nodes_.emplace_back();
    n.ref = &p.value;
    param_nodes_.emplace(&p, &n);
    return Var(&n);
}

void Tape::backward(Var out) {
    require(out.rows() == 1 && out.cols() == 1, "backward expects a scalar output");
    if (!out.needs_grad()) return;
    out.node()->grad_buffer()(0, 0) += 1.0;
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
        if (it->needs_grad && it->backward && it->grad.size() != 0) it->backward();
    }
}

double gelu_value(double x) {
    return 0.5 * x * (1.0 + std::tanh(kGeluC * (x + kGeluA * x * x * x)));
}

Var matmul(Tape& t, Var a, Var b) {
    require(a.cols() == b.rows(), "matmul: inner dimensions differ");
    Mat out;
    out.noalias() = a.value() * b.value();
    Node* n = t.make(std::move(out), a.needs_grad() || b.needs_grad());
    if (n->needs_grad) {
        Node* na = a.node();
        Node* nb = b.node();
        n->backward = [n, na, nb] {
            if (na->needs_grad) na->grad_buffer().noalias() += n->grad * nb->value().transpose();
            if (nb->needs_grad) nb->grad_buffer().noalias() += na->value().transpose() * n->grad;
        };
    }
    return Var(n);
}

Var matmul_nt(Tape& t, Var a, Var b) {
    require(a.cols() == b.cols(), "matmul_nt: inner dimensions differ");
    Mat out;
    out.noalias() = a.value() * b.value().transpose();
    Node* n = t.make(std::move(out), a.needs_grad() || b.needs_grad());
    if (n->needs_grad) {
        Node* na = a.node();
        Node* nb = b.node();
        n->backward = [n, na, nb] {
            if (na->needs_grad) na->grad_buffer().noalias() += n->grad * nb->value();
            if (nb->needs_grad) nb->grad_buffer().noalias() += n->grad.transpose() * na->value();
        };
    }
    return Var(n);
}

Var add(Tape& t, Var a, Var b) {
    require(a.rows() == b.rows() && a.cols() == b.cols(), "add: shape mismatch");
    Node* n = t.make(a.value() + b.value(), a.needs_grad() || b.needs_grad());
    if (n->needs_grad) {
        Node* na = a.node();
        Node* nb = b.node();
        n->backward = [n, na, nb] {
            if (na->needs_grad) na->grad_buffer() += n->grad;
            if (nb->needs_grad) nb->grad_buffer() += n->grad;
        };
    }
    return Var(n);
}

Var add_row(Tape& t, Var x, Var row) {
    require(row.rows() == 1 && row.cols() == x.cols(), "add_row: bias shape mismatch");
    Mat out = x.value();
    out.rowwise() += row.value().row(0);
    Node* n = t.make(std::move(out), x.needs_grad() || row.needs_grad());
    if (n->needs_grad) {
        Node* nx = x.node();
        Node* nr = row.node();
        n->backward = [n, nx, nr] {
            if (nx->needs_grad) nx->grad_buffer() += n->grad;
            if (nr->needs_grad) nr->grad_buffer().row(0) += n->grad.colwise().sum();
        };
    }
    return Var(n);
}

Var scale(Tape& t, Var x, double s) {
    Node* n = t.make(x.value() * s, x.needs_grad());
    if (n->needs_grad) {
        Node* nx = x.node();
        n->backward = [n, nx, s] { nx->grad_buffer() += n->grad * s; };
    }
    return Var(n);
}

Var gelu(Tape& t, Var x) {
    const Mat& v = x.value();
    Mat out = v.unaryExpr([](double z) { return gelu_value(z); });
    Node* n = t.make(std::move(out), x.needs_grad());
    if (n->needs_grad) {
        Node* nx = x.node();
        n->backward = [n, nx] {
            const Mat& z = nx->value();
            Mat& g = nx->grad_buffer();
            for (Eigen::Index i = 0; i < z.size(); ++i) {
                const double xv = z.data()[i];
                const double u = kGeluC * (xv + kGeluA * xv * xv * xv);
                const double th = std::tanh(u);
                const double du = kGeluC * (1.0 + 3.0 * kGeluA * xv * xv);
                const double d = 0.5 * (1.0 + th) + 0.5 * xv * (1.0 - th * th) * du;
                g.data()[i] += n->grad.data()[i] * d;
            }
        };
    }
    return Var(n);
}

Var layer_norm(Tape& t, Var x, Var gamma, Var beta, double eps) {
    const Mat& v = x.value();
    const Eigen::Index rows = v.rows();
    const Eigen::Index cols = v.cols();
    require(gamma.rows() == 1 && gamma.cols() == cols && beta.rows() == 1 && beta.cols() == cols,
            "layer_norm: affine shape mismatch");
    Mat xhat(rows, cols);
    Eigen::VectorXd inv_std(rows);
    for (Eigen::Index r = 0; r < rows; ++r) {
        const double mean = v.row(r).mean();
        const double var = (v.row(r).array() - mean).square().mean();
        inv_std(r) = 1.0 / std::sqrt(var + eps);
        xhat.row(r) = (v.row(r).array() - mean) * inv_std(r);
    }
    Mat out = xhat;
    out.array().rowwise() *= gamma.value().row(0).array();
    out.rowwise() += beta.value().row(0);
    Node* n = t.make(std::move(out), x.needs_grad() || gamma.needs_grad() || beta.needs_grad());
    if (n->needs_grad) {
        Node* nx = x.node();
        Node* ng = gamma.node();
        Node* nb = beta.node();
        n->backward = [n, nx, ng, nb, xhat = std::move(xhat), inv_std = std::move(inv_std)] {
            const Mat& dy = n->grad;
            if (ng->needs_grad) ng->grad_buffer().row(0) += (dy.array() * xhat.array()).colwise().sum().matrix();
            if (nb->needs_grad) nb->grad_buffer().row(0) += dy.colwise().sum();
            if (nx->needs_grad) {
                Mat& gx = nx->grad_buffer();
                const auto g = ng->value().row(0).array();
                for (Eigen::Index r = 0; r < dy.rows(); ++r) {
                    Eigen::ArrayXd dxhat = (dy.row(r).array() * g).transpose();
                    const double m1 = dxhat.mean();
                    const double m2 = (dxhat * xhat.row(r).array().transpose()).mean();
                    gx.row(r).array() +=
                        inv_std(r) * (dxhat - m1 - xhat.row(r).array().transpose() * m2).transpose();
                }
            }
        };
    }
    return Var(n);
}

Var attention(Tape& t, Var qkv, int heads, bool causal) {
    const Mat& v = qkv.value();
    require(v.cols() % 3 == 0, "attention: packed width must be divisible by 3");
    const Eigen::Index len = v.rows();
    const Eigen::Index width = v.cols() / 3;
    require(heads > 0 && width % heads == 0, "attention: width not divisible by heads");
    const Eigen::Index hd = width / heads;
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(hd));

    std::vector<Mat> probs(static_cast<std::size_t>(heads));
    Mat out(len, width);
    for (int h = 0; h < heads; ++h) {
        const auto q = v.middleCols(h * hd, hd);
        const auto k = v.middleCols(width + h * hd, hd);
        const auto val = v.middleCols(2 * width + h * hd, hd);
        Mat s;
        s.noalias() = (q * k.transpose()) * inv_sqrt;
        for (Eigen::Index i = 0; i < len; ++i) {
            const Eigen::Index visible = causal ? i + 1 : len;
            double mx = -std::numeric_limits<double>::infinity();
            for (Eigen::Index j = 0; j < visible; ++j) mx = std::max(mx, s(i, j));
            double total = 0.0;
            for (Eigen::Index j = 0; j < visible; ++j) {
                s(i, j) = std::exp(s(i, j) - mx);
                total += s(i, j);
            }
            for (Eigen::Index j = 0; j < visible; ++j) s(i, j) /= total;
            for (Eigen::Index j = visible; j < len; ++j) s(i, j) = 0.0;
        }
        out.middleCols(h * hd, hd).noalias() = s * val;
        probs[static_cast<std::size_t>(h)] = std::move(s);
    }
    Node* n = t.make(std::move(out), qkv.needs_grad());
    if (n->needs_grad) {
        Node* nq = qkv.node();
        n->backward = [n, nq, heads, width, hd, inv_sqrt, probs = std::move(probs)] {
            const Mat& in = nq->value();
            Mat& g = nq->grad_buffer();
            for (int h = 0; h < heads; ++h) {
                const Mat& p = probs[static_cast<std::size_t>(h)];
                const auto q = in.middleCols(h * hd, hd);
                const auto k = in.middleCols(width + h * hd, hd);
                const auto val = in.middleCols(2 * width + h * hd, hd);
                const auto dout = n->grad.middleCols(h * hd, hd);
                Mat dp;
                dp.noalias() = dout * val.transpose();
                g.middleCols(2 * width + h * hd, hd).noalias() += p.transpose() * dout;
                Eigen::VectorXd rowdot = (dp.array() * p.array()).rowwise().sum();
                Mat ds = (p.array() * (dp.array().colwise() - rowdot.array())).matrix() * inv_sqrt;
                g.middleCols(h * hd, hd).noalias() += ds * k;
                g.middleCols(width + h * hd, hd).noalias() += ds.transpose() * q;
            }
        };
    }
    return Var(n);
}

Var gather_rows(Tape& t, Var table, std::span<const int> rows) {
    const Mat& v = table.value();
    Mat out(static_cast<Eigen::Index>(rows.size()), v.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        require(rows[i] >= 0 && rows[i] < v.rows(), "gather_rows: index out of range");
        out.row(static_cast<Eigen::Index>(i)) = v.row(rows[i]);
    }
    Node* n = t.make(std::move(out), table.needs_grad());
    if (n->needs_grad) {
        Node* nt = table.node();
        n->backward = [n, nt, idx = std::vector<int>(rows.begin(), rows.end())] {
            Mat& g = nt->grad_buffer();
            for (std::size_t i = 0; i < idx.size(); ++i) g.row(idx[i]) += n->grad.row(static_cast<Eigen::Index>(i));
        };
    }
    return Var(n);
}

Var concat_rows(Tape& t, std::span<const Var> parts) {
    require(!parts.empty(), "concat_rows: no inputs");
    const Eigen::Index cols = parts.front().cols();
    Eigen::Index rows = 0;
    bool grad = false;
    for (const Var& p : parts) {
        require(p.cols() == cols, "concat_rows: width mismatch");
        rows += p.rows();
        grad = grad || p.needs_grad();
    }
    Mat out(rows, cols);
    Eigen::Index at = 0;
    for (const Var& p : parts) {
        out.middleRows(at, p.rows()) = p.value();
        at += p.rows();
    }
    Node* n = t.make(std::move(out), grad);
    if (n->needs_grad) {
        std::vector<Node*> inputs;
        for (const Var& p : parts) inputs.push_back(p.node());
        n->backward = [n, inputs = std::move(inputs)] {
            Eigen::Index off = 0;
            for (Node* in : inputs) {
                const Eigen::Index r = in->value().rows();
                if (in->needs_grad) in->grad_buffer() += n->grad.middleRows(off, r);
                off += r;
            }
        };
    }
    return Var(n);
}

Var cross_entropy_sum(Tape& t, Var logits, std::span<const int> targets) {
    const Mat& z = logits.value();
    require(static_cast<std::size_t>(z.rows()) == targets.size(), "cross_entropy: target count mismatch");
    Mat probs(z.rows(), z.cols());
    double total = 0.0;
    for (Eigen::Index r = 0; r < z.rows(); ++r) {
        const int target = targets[static_cast<std::size_t>(r)];
        require(target >= 0 && target < z.cols(), "cross_entropy: target out of range");
        const double mx = z.row(r).maxCoeff();
        probs.row(r) = (z.row(r).array() - mx).exp();
        const double denom = probs.row(r).sum();
        probs.row(r) /= denom;
        total += std::log(denom) + mx - z(r, target);
    }
    Mat out(1, 1);
    out(0, 0) = total;
    Node* n = t.make(std::move(out), logits.needs_grad());
    if (n->needs_grad) {
        Node* nz = logits.node();
        n->backward = [n, nz, probs = std::move(probs), tg = std::vector<int>(targets.begin(), targets.end())] {
            const double up = n->grad(0, 0);
            Mat& g = nz->grad_buffer();
            g += probs * up;
            for (std::size_t r = 0; r < tg.size(); ++r) g(static_cast<Eigen::Index>(r), tg[r]) -= up;
        };
    }
    return Var(n);
}

Var sum_scalars(Tape& t, std::span<const Var> parts, std::span<const double> weights) {
    require(parts.size() == weights.size(), "sum_scalars: weight count mismatch");
    double total = 0.0;
    bool grad = false;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        require(parts[i].rows() == 1 && parts[i].cols() == 1, "sum_scalars: non-scalar input");
        total += weights[i] * parts[i].scalar();
        grad = grad || parts[i].needs_grad();
    }
    Mat out(1, 1);
    out(0, 0) = total;
    Node* n = t.make(std::move(out), grad);
    if (n->needs_grad) {
        std::vector<Node*> inputs;
        for (const Var& p : parts) inputs.push_back(p.node());
        n->backward = [n, inputs = std::move(inputs), w = std::vector<double>(weights.begin(), weights.end())] {
            for (std::size_t i = 0; i < inputs.size(); ++i)
                if (inputs[i]->needs_grad) inputs[i]->grad_buffer()(0, 0) += w[i] * n->grad(0, 0);
        };
    }
    return Var(n);
}

}  // namespace idprior::ag
