#include "recam/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "recam/errors.hpp"

namespace recam {

namespace {

constexpr double kInvSqrt2 = 0.7071067811865475244;
constexpr double kInvSqrt2Pi = 0.3989422804014326779;

bool grad_wanted(std::initializer_list<const Tensor*> inputs) {
    for (const Tensor* t : inputs) {
        if (t->requires_grad()) return true;
    }
    return false;
}

/// Wires parents + backward into `out` when any input is recorded.
void record(Tensor& out, std::initializer_list<const Tensor*> inputs,
            std::function<void(detail::TensorNode&)> backward_fn) {
    if (!grad_wanted(inputs)) return;
    out.node()->requires_grad = true;
    for (const Tensor* t : inputs) {
        out.node()->parents.push_back(t->node());
    }
    out.node()->backward_fn = std::move(backward_fn);
}

void accumulate(detail::TensorNode& parent, const std::vector<double>& contribution) {
    if (!parent.requires_grad) return;
    parent.ensure_grad();
    for (std::size_t i = 0; i < contribution.size(); ++i) {
        parent.grad[i] += contribution[i];
    }
}

// C[m x n] += A[m x k] * B[k x n]
void gemm_acc(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
              std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        double* crow = c + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = a[i * k + p];
            const double* brow = b + p * n;
            for (std::size_t j = 0; j < n; ++j) {
                crow[j] += av * brow[j];
            }
        }
    }
}

// C[m x k] += A[m x n] * B[k x n]^T
void gemm_acc_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t n,
                 std::size_t k) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* arow = a + i * n;
        for (std::size_t j = 0; j < k; ++j) {
            const double* brow = b + j * n;
            double sum = 0.0;
            for (std::size_t p = 0; p < n; ++p) {
                sum += arow[p] * brow[p];
            }
            c[i * k + j] += sum;
        }
    }
}

// C[k x n] += A[m x k]^T * B[m x n]
void gemm_acc_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                 std::size_t n) {
    for (std::size_t p = 0; p < m; ++p) {
        const double* arow = a + p * k;
        const double* brow = b + p * n;
        for (std::size_t i = 0; i < k; ++i) {
            const double av = arow[i];
            double* crow = c + i * n;
            for (std::size_t j = 0; j < n; ++j) {
                crow[j] += av * brow[j];
            }
        }
    }
}

} // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.ndim() != 2 || b.ndim() != 2) {
        throw dimension_error("matmul: expected 2-D operands, got " + shape_to_string(a.shape()) +
                              " and " + shape_to_string(b.shape()));
    }
    if (a.cols() != b.rows()) {
        throw dimension_error("matmul: inner dimensions disagree: " + shape_to_string(a.shape()) +
                              " vs " + shape_to_string(b.shape()));
    }
    const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
    Tensor out = Tensor::zeros({m, n});
    gemm_acc(a.data().data(), b.data().data(), out.data().data(), m, k, n);

    record(out, {&a, &b}, [m, k, n](detail::TensorNode& self) {
        auto& pa = *self.parents[0];
        auto& pb = *self.parents[1];
        if (pa.requires_grad) {
            pa.ensure_grad();
            gemm_acc_nt(self.grad.data(), pb.data.data(), pa.grad.data(), m, n, k);
        }
        if (pb.requires_grad) {
            pb.ensure_grad();
            gemm_acc_tn(pa.data.data(), self.grad.data(), pb.grad.data(), m, k, n);
        }
    });
    return out;
}

Tensor transpose(const Tensor& a) {
    const std::size_t m = a.rows(), n = a.cols();
    Tensor out = Tensor::zeros({n, m});
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            out.data()[j * m + i] = a.data()[i * n + j];
        }
    }
    record(out, {&a}, [m, n](detail::TensorNode& self) {
        auto& pa = *self.parents[0];
        if (!pa.requires_grad) return;
        pa.ensure_grad();
        for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                pa.grad[i * n + j] += self.grad[j * m + i];
            }
        }
    });
    return out;
}

namespace {

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw dimension_error(std::string(op) + ": shape mismatch: " + shape_to_string(a.shape()) +
                              " vs " + shape_to_string(b.shape()));
    }
}

} // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "add");
    Tensor out = Tensor::zeros(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) out.data()[i] = a.data()[i] + b.data()[i];
    record(out, {&a, &b}, [](detail::TensorNode& self) {
        accumulate(*self.parents[0], self.grad);
        accumulate(*self.parents[1], self.grad);
    });
    return out;
}

Tensor add_rowvec(const Tensor& a, const Tensor& row) {
    const std::size_t m = a.rows(), n = a.cols();
    if (row.ndim() != 1 || row.size() != n) {
        throw dimension_error("add_rowvec: row " + shape_to_string(row.shape()) +
                              " does not match matrix " + shape_to_string(a.shape()));
    }
    Tensor out = Tensor::zeros({m, n});
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            out.data()[i * n + j] = a.data()[i * n + j] + row.data()[j];
        }
    }
    record(out, {&a, &row}, [m, n](detail::TensorNode& self) {
        auto& pa = *self.parents[0];
        auto& pr = *self.parents[1];
        if (pa.requires_grad) accumulate(pa, self.grad);
        if (pr.requires_grad) {
            pr.ensure_grad();
            for (std::size_t i = 0; i < m; ++i) {
                for (std::size_t j = 0; j < n; ++j) {
                    pr.grad[j] += self.grad[i * n + j];
                }
            }
        }
    });
    return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "sub");
    Tensor out = Tensor::zeros(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) out.data()[i] = a.data()[i] - b.data()[i];
    record(out, {&a, &b}, [](detail::TensorNode& self) {
        auto& pa = *self.parents[0];
        auto& pb = *self.parents[1];
        if (pa.requires_grad) accumulate(pa, self.grad);
        if (pb.requires_grad) {
            pb.ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i) pb.grad[i] -= self.grad[i];
        }
    });
    return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "mul");
    Tensor out = Tensor::zeros(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) out.data()[i] = a.data()[i] * b.data()[i];
    record(out, {&a, &b}, [](detail::TensorNode& self) {
        auto& pa = *self.parents[0];
        auto& pb = *self.parents[1];
        if (pa.requires_grad) {
            pa.ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i) {
                pa.grad[i] += self.grad[i] * pb.data[i];
            }
        }
        if (pb.requires_grad) {
            pb.ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i) {
                pb.grad[i] += self.grad[i] * pa.data[i];
            }
        }
    });
    return out;
}

Tensor scale(const Tensor& a, double c) {
    Tensor out = Tensor::zeros(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) out.data()[i] = a.data()[i] * c;
    record(out, {&a}, [c](detail::TensorNode& self) {
        auto& pa = *self.parents[0];
        if (!pa.requires_grad) return;
        pa.ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i) pa.grad[i] += self.grad[i] * c;
    });
    return out;
}

Tensor gelu(const Tensor& a) {
    Tensor out = Tensor::zeros(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double x = a.data()[i];
        out.data()[i] = 0.5 * x * (1.0 + std::erf(x * kInvSqrt2));
    }
    record(out, {&a}, [](detail::TensorNode& self) {
        auto& pa = *self.parents[0];
        if (!pa.requires_grad) return;
        pa.ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i) {
            const double x = pa.data[i];
            const double d =
                0.5 * (1.0 + std::erf(x * kInvSqrt2)) + x * kInvSqrt2Pi * std::exp(-0.5 * x * x);
            pa.grad[i] += self.grad[i] * d;
        }
    });
    return out;
}

Tensor softmax(const Tensor& x, int axis) {
    if (axis < 0 || static_cast<std::size_t>(axis) >= x.ndim()) {
        throw dimension_error("softmax: axis " + std::to_string(axis) + " invalid for shape " +
                              shape_to_string(x.shape()));
    }
    const auto& shape = x.shape();
    const std::size_t len = shape[static_cast<std::size_t>(axis)];
    std::size_t outer = 1, inner = 1;
    for (int d = 0; d < axis; ++d) outer *= shape[static_cast<std::size_t>(d)];
    for (std::size_t d = static_cast<std::size_t>(axis) + 1; d < shape.size(); ++d) inner *= shape[d];

    Tensor out = Tensor::zeros(shape);
    for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t in = 0; in < inner; ++in) {
            const std::size_t base = o * len * inner + in;
            double mx = -std::numeric_limits<double>::infinity();
            for (std::size_t t = 0; t < len; ++t) mx = std::max(mx, x.data()[base + t * inner]);
            double sum = 0.0;
            for (std::size_t t = 0; t < len; ++t) {
                const double e = std::exp(x.data()[base + t * inner] - mx);
                out.data()[base + t * inner] = e;
                sum += e;
            }
            for (std::size_t t = 0; t < len; ++t) out.data()[base + t * inner] /= sum;
        }
    }

    record(out, {&x}, [outer, inner, len](detail::TensorNode& self) {
        auto& pa = *self.parents[0];
        if (!pa.requires_grad) return;
        pa.ensure_grad();
        for (std::size_t o = 0; o < outer; ++o) {
            for (std::size_t in = 0; in < inner; ++in) {
                const std::size_t base = o * len * inner + in;
                double dotv = 0.0;
                for (std::size_t t = 0; t < len; ++t) {
                    const std::size_t idx = base + t * inner;
                    dotv += self.grad[idx] * self.data[idx];
                }
                for (std::size_t t = 0; t < len; ++t) {
                    const std::size_t idx = base + t * inner;
                    pa.grad[idx] += self.data[idx] * (self.grad[idx] - dotv);
                }
            }
        }
    });
    return out;
}

Tensor softmax_rows_masked(const Tensor& x, const std::vector<std::uint8_t>& key_valid) {
    const std::size_t m = x.rows(), n = x.cols();
    if (key_valid.size() != n) {
        throw dimension_error("softmax_rows_masked: mask length " +
                              std::to_string(key_valid.size()) + " vs " + std::to_string(n) +
                              " columns");
    }
    bool any_valid = false;
    for (auto v : key_valid) any_valid = any_valid || v != 0;
    if (!any_valid) {
        throw degenerate_input_error("softmax_rows_masked: all key positions masked");
    }

    Tensor out = Tensor::zeros({m, n});
    for (std::size_t i = 0; i < m; ++i) {
        const double* row = x.data().data() + i * n;
        double* orow = out.data().data() + i * n;
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < n; ++j) {
            if (key_valid[j]) mx = std::max(mx, row[j]);
        }
        double sum = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            if (key_valid[j]) {
                orow[j] = std::exp(row[j] - mx);
                sum += orow[j];
            }
        }
        for (std::size_t j = 0; j < n; ++j) {
            if (key_valid[j]) orow[j] /= sum;
        }
    }

    record(out, {&x}, [m, n, key_valid](detail::TensorNode& self) {
        auto& pa = *self.parents[0];
        if (!pa.requires_grad) return;
        pa.ensure_grad();
        for (std::size_t i = 0; i < m; ++i) {
            double dotv = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                if (key_valid[j]) dotv += self.grad[i * n + j] * self.data[i * n + j];
            }
            for (std::size_t j = 0; j < n; ++j) {
                if (key_valid[j]) {
                    pa.grad[i * n + j] += self.data[i * n + j] * (self.grad[i * n + j] - dotv);
                }
            }
        }
    });
    return out;
}

Tensor cross_entropy(const Tensor& logits, int label) {
    if (logits.ndim() != 1) {
        throw argument_error("cross_entropy: logits must be 1-D, got " +
                             shape_to_string(logits.shape()));
    }
    const std::size_t n = logits.size();
    if (label < 0 || static_cast<std::size_t>(label) >= n) {
        throw argument_error("cross_entropy: label " + std::to_string(label) +
                             " out of range for " + std::to_string(n) + " logits");
    }
    double mx = -std::numeric_limits<double>::infinity();
    for (double v : logits.data()) mx = std::max(mx, v);
    double sum = 0.0;
    for (double v : logits.data()) sum += std::exp(v - mx);
    const double loss = mx + std::log(sum) - logits.data()[static_cast<std::size_t>(label)];

    Tensor out = Tensor::scalar(loss);
    record(out, {&logits}, [n, label, mx, sum](detail::TensorNode& self) {
        auto& pa = *self.parents[0];
        if (!pa.requires_grad) return;
        pa.ensure_grad();
        const double g = self.grad[0];
        for (std::size_t i = 0; i < n; ++i) {
            const double p = std::exp(pa.data[i] - mx) / sum;
            pa.grad[i] += g * (p - (static_cast<std::size_t>(label) == i ? 1.0 : 0.0));
        }
    });
    return out;
}

Tensor cross_entropy_rows(const Tensor& logits, const std::vector<int>& labels) {
    const std::size_t m = logits.rows(), n = logits.cols();
    if (labels.size() != m) {
        throw argument_error("cross_entropy_rows: " + std::to_string(labels.size()) +
                             " labels for " + std::to_string(m) + " rows");
    }
    for (int lab : labels) {
        if (lab < 0 || static_cast<std::size_t>(lab) >= n) {
            throw argument_error("cross_entropy_rows: label " + std::to_string(lab) +
                                 " out of range for " + std::to_string(n) + " classes");
        }
    }
    double total = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        const double* r = logits.data().data() + i * n;
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < n; ++j) mx = std::max(mx, r[j]);
        double sum = 0.0;
        for (std::size_t j = 0; j < n; ++j) sum += std::exp(r[j] - mx);
        total += mx + std::log(sum) - r[static_cast<std::size_t>(labels[i])];
    }
    Tensor out = Tensor::scalar(total / static_cast<double>(m));

    record(out, {&logits}, [m, n, labels](detail::TensorNode& self) {
        auto& pa = *self.parents[0];
        if (!pa.requires_grad) return;
        pa.ensure_grad();
        const double g = self.grad[0] / static_cast<double>(m);
        for (std::size_t i = 0; i < m; ++i) {
            const double* r = pa.data.data() + i * n;
            double mx = -std::numeric_limits<double>::infinity();
            for (std::size_t j = 0; j < n; ++j) mx = std::max(mx, r[j]);
            double sum = 0.0;
            for (std::size_t j = 0; j < n; ++j) sum += std::exp(r[j] - mx);
            for (std::size_t j = 0; j < n; ++j) {
                const double p = std::exp(r[j] - mx) / sum;
                const double y = static_cast<std::size_t>(labels[i]) == j ? 1.0 : 0.0;
                pa.grad[i * n + j] += g * (p - y);
            }
        }
    });
    return out;
}

Tensor row(const Tensor& x, std::size_t i) {
    const std::size_t m = x.rows(), n = x.cols();
    if (i >= m) {
        throw dimension_error("row: index " + std::to_string(i) + " out of " + std::to_string(m) +
                              " rows");
    }
    Tensor out = Tensor::zeros({n});
    std::copy(x.data().begin() + static_cast<long>(i * n),
              x.data().begin() + static_cast<long>((i + 1) * n), out.data().begin());
    record(out, {&x}, [i, n](detail::TensorNode& self) {
        auto& pa = *self.parents[0];
        if (!pa.requires_grad) return;
        pa.ensure_grad();
        for (std::size_t j = 0; j < n; ++j) pa.grad[i * n + j] += self.grad[j];
    });
    return out;
}

Tensor dropout(const Tensor& x, double rate, bool training, RandomSource& rng) {
    if (rate < 0.0 || rate >= 1.0) {
        throw argument_error("dropout: rate must lie in [0, 1), got " + std::to_string(rate));
    }
    if (!training || rate == 0.0) {
        return x;
    }
    const double keep_scale = 1.0 / (1.0 - rate);
    std::vector<double> factor(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        factor[i] = rng.uniform() < rate ? 0.0 : keep_scale;
    }
    Tensor out = Tensor::zeros(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) out.data()[i] = x.data()[i] * factor[i];
    record(out, {&x}, [factor = std::move(factor)](detail::TensorNode& self) {
        auto& pa = *self.parents[0];
        if (!pa.requires_grad) return;
        pa.ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i) {
            pa.grad[i] += self.grad[i] * factor[i];
        }
    });
    return out;
}

Tensor mean_pool(const Tensor& x, const std::vector<std::uint8_t>& valid) {
    const std::size_t m = x.rows(), n = x.cols();
    if (valid.size() != m) {
        throw dimension_error("mean_pool: mask length " + std::to_string(valid.size()) + " vs " +
                              std::to_string(m) + " rows");
    }
    std::size_t count = 0;
    for (auto v : valid) count += v != 0 ? 1 : 0;
    if (count == 0) {
        throw degenerate_input_error("mean_pool: all positions masked");
    }
    Tensor out = Tensor::zeros({n});
    for (std::size_t i = 0; i < m; ++i) {
        if (!valid[i]) continue;
        for (std::size_t j = 0; j < n; ++j) out.data()[j] += x.data()[i * n + j];
    }
    const double inv = 1.0 / static_cast<double>(count);
    for (std::size_t j = 0; j < n; ++j) out.data()[j] *= inv;

    record(out, {&x}, [m, n, valid, inv](detail::TensorNode& self) {
        auto& pa = *self.parents[0];
        if (!pa.requires_grad) return;
        pa.ensure_grad();
        for (std::size_t i = 0; i < m; ++i) {
            if (!valid[i]) continue;
            for (std::size_t j = 0; j < n; ++j) {
                pa.grad[i * n + j] += self.grad[j] * inv;
            }
        }
    });
    return out;
}

Tensor gather_rows(const Tensor& x, const std::vector<std::size_t>& indices) {
    const std::size_t m = x.rows(), n = x.cols();
    for (std::size_t idx : indices) {
        if (idx >= m) {
            throw dimension_error("gather_rows: index " + std::to_string(idx) + " out of " +
                                  std::to_string(m) + " rows");
        }
    }
    Tensor out = Tensor::zeros({indices.size(), n});
    for (std::size_t r = 0; r < indices.size(); ++r) {
        const double* src = x.data().data() + indices[r] * n;
        std::copy(src, src + n, out.data().data() + r * n);
    }
    record(out, {&x}, [indices, n](detail::TensorNode& self) {
        auto& pa = *self.parents[0];
        if (!pa.requires_grad) return;
        pa.ensure_grad();
        for (std::size_t r = 0; r < indices.size(); ++r) {
            for (std::size_t j = 0; j < n; ++j) {
                pa.grad[indices[r] * n + j] += self.grad[r * n + j];
            }
        }
    });
    return out;
}

Tensor embedding_lookup(const Tensor& table, const std::vector<int>& ids) {
    const std::size_t v = table.rows(), d = table.cols();
    for (int id : ids) {
        if (id < 0 || static_cast<std::size_t>(id) >= v) {
            throw data_error("embedding_lookup: token id " + std::to_string(id) +
                             " outside vocabulary of size " + std::to_string(v));
        }
    }
    Tensor out = Tensor::zeros({ids.size(), d});
    for (std::size_t r = 0; r < ids.size(); ++r) {
        const double* src = table.data().data() + static_cast<std::size_t>(ids[r]) * d;
        std::copy(src, src + d, out.data().data() + r * d);
    }
    record(out, {&table}, [ids, d](detail::TensorNode& self) {
        auto& pt = *self.parents[0];
        if (!pt.requires_grad) return;
        pt.ensure_grad();
        for (std::size_t r = 0; r < ids.size(); ++r) {
            const std::size_t row = static_cast<std::size_t>(ids[r]) * d;
            for (std::size_t j = 0; j < d; ++j) {
                pt.grad[row + j] += self.grad[r * d + j];
            }
        }
    });
    return out;
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
    if (parts.empty()) {
        throw argument_error("concat_cols: no parts");
    }
    const std::size_t m = parts.front().rows();
    std::size_t total = 0;
    for (const Tensor& p : parts) {
        if (p.rows() != m) {
            throw dimension_error("concat_cols: row counts differ: " +
                                  shape_to_string(parts.front().shape()) + " vs " +
                                  shape_to_string(p.shape()));
        }
        total += p.cols();
    }
    Tensor out = Tensor::zeros({m, total});
    std::size_t offset = 0;
    std::vector<std::size_t> offsets, widths;
    for (const Tensor& p : parts) {
        const std::size_t w = p.cols();
        for (std::size_t i = 0; i < m; ++i) {
            std::copy(p.data().data() + i * w, p.data().data() + (i + 1) * w,
                      out.data().data() + i * total + offset);
        }
        offsets.push_back(offset);
        widths.push_back(w);
        offset += w;
    }

    bool rec = false;
    for (const Tensor& p : parts) rec = rec || p.requires_grad();
    if (rec) {
        out.node()->requires_grad = true;
        for (const Tensor& p : parts) out.node()->parents.push_back(p.node());
        out.node()->backward_fn = [m, total, offsets, widths](detail::TensorNode& self) {
            for (std::size_t k = 0; k < self.parents.size(); ++k) {
                auto& pp = *self.parents[k];
                if (!pp.requires_grad) continue;
                pp.ensure_grad();
                for (std::size_t i = 0; i < m; ++i) {
                    for (std::size_t j = 0; j < widths[k]; ++j) {
                        pp.grad[i * widths[k] + j] += self.grad[i * total + offsets[k] + j];
                    }
                }
            }
        };
    }
    return out;
}

Tensor concat_vec(const Tensor& a, const Tensor& b) {
    if (a.ndim() != 1 || b.ndim() != 1) {
        throw dimension_error("concat_vec: expected 1-D operands, got " +
                              shape_to_string(a.shape()) + " and " + shape_to_string(b.shape()));
    }
    const std::size_t p = a.size(), q = b.size();
    Tensor out = Tensor::zeros({p + q});
    std::copy(a.data().begin(), a.data().end(), out.data().begin());
    std::copy(b.data().begin(), b.data().end(), out.data().begin() + static_cast<long>(p));
    record(out, {&a, &b}, [p, q](detail::TensorNode& self) {
        auto& pa = *self.parents[0];
        auto& pb = *self.parents[1];
        if (pa.requires_grad) {
            pa.ensure_grad();
            for (std::size_t i = 0; i < p; ++i) pa.grad[i] += self.grad[i];
        }
        if (pb.requires_grad) {
            pb.ensure_grad();
            for (std::size_t i = 0; i < q; ++i) pb.grad[i] += self.grad[p + i];
        }
    });
    return out;
}

Tensor stack_scalars(const std::vector<Tensor>& scalars) {
    if (scalars.empty()) {
        throw argument_error("stack_scalars: no inputs");
    }
    Tensor out = Tensor::zeros({scalars.size()});
    bool rec = false;
    for (std::size_t i = 0; i < scalars.size(); ++i) {
        out.data()[i] = scalars[i].item();
        rec = rec || scalars[i].requires_grad();
    }
    if (rec) {
        out.node()->requires_grad = true;
        for (const Tensor& s : scalars) out.node()->parents.push_back(s.node());
        out.node()->backward_fn = [](detail::TensorNode& self) {
            for (std::size_t i = 0; i < self.parents.size(); ++i) {
                auto& p = *self.parents[i];
                if (!p.requires_grad) continue;
                p.ensure_grad();
                p.grad[0] += self.grad[i];
            }
        };
    }
    return out;
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
    const std::size_t m = x.rows(), d = x.cols();
    if (gain.ndim() != 1 || gain.size() != d || bias.ndim() != 1 || bias.size() != d) {
        throw dimension_error("layer_norm: gain/bias width must match feature width " +
                              std::to_string(d));
    }
    Tensor out = Tensor::zeros({m, d});
    for (std::size_t i = 0; i < m; ++i) {
        const double* row = x.data().data() + i * d;
        double mu = 0.0;
        for (std::size_t j = 0; j < d; ++j) mu += row[j];
        mu /= static_cast<double>(d);
        double var = 0.0;
        for (std::size_t j = 0; j < d; ++j) var += (row[j] - mu) * (row[j] - mu);
        var /= static_cast<double>(d);
        const double sigma = std::sqrt(var + eps);
        for (std::size_t j = 0; j < d; ++j) {
            out.data()[i * d + j] = gain.data()[j] * (row[j] - mu) / sigma + bias.data()[j];
        }
    }

    record(out, {&x, &gain, &bias}, [m, d, eps](detail::TensorNode& self) {
        auto& px = *self.parents[0];
        auto& pg = *self.parents[1];
        auto& pb = *self.parents[2];
        std::vector<double> xhat(d), h(d);
        for (std::size_t i = 0; i < m; ++i) {
            const double* row = px.data.data() + i * d;
            double mu = 0.0;
            for (std::size_t j = 0; j < d; ++j) mu += row[j];
            mu /= static_cast<double>(d);
            double var = 0.0;
            for (std::size_t j = 0; j < d; ++j) var += (row[j] - mu) * (row[j] - mu);
            var /= static_cast<double>(d);
            const double sigma = std::sqrt(var + eps);
            for (std::size_t j = 0; j < d; ++j) xhat[j] = (row[j] - mu) / sigma;

            const double* gy = self.grad.data() + i * d;
            if (pg.requires_grad) {
                pg.ensure_grad();
                for (std::size_t j = 0; j < d; ++j) pg.grad[j] += gy[j] * xhat[j];
            }
            if (pb.requires_grad) {
                pb.ensure_grad();
                for (std::size_t j = 0; j < d; ++j) pb.grad[j] += gy[j];
            }
            if (px.requires_grad) {
                px.ensure_grad();
                double mean_h = 0.0, mean_hx = 0.0;
                for (std::size_t j = 0; j < d; ++j) {
                    h[j] = pg.data[j] * gy[j];
                    mean_h += h[j];
                    mean_hx += h[j] * xhat[j];
                }
                mean_h /= static_cast<double>(d);
                mean_hx /= static_cast<double>(d);
                for (std::size_t j = 0; j < d; ++j) {
                    px.grad[i * d + j] += (h[j] - mean_h - xhat[j] * mean_hx) / sigma;
                }
            }
        }
    });
    return out;
}

Tensor dot(const Tensor& a, const Tensor& b) {
    if (a.ndim() != 1 || b.ndim() != 1 || a.size() != b.size()) {
        throw dimension_error("dot: operands must be equal-length vectors, got " +
                              shape_to_string(a.shape()) + " and " + shape_to_string(b.shape()));
    }
    double sum = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) sum += a.data()[i] * b.data()[i];
    Tensor out = Tensor::scalar(sum);
    record(out, {&a, &b}, [](detail::TensorNode& self) {
        auto& pa = *self.parents[0];
        auto& pb = *self.parents[1];
        const double g = self.grad[0];
        if (pa.requires_grad) {
            pa.ensure_grad();
            for (std::size_t i = 0; i < pa.data.size(); ++i) pa.grad[i] += g * pb.data[i];
        }
        if (pb.requires_grad) {
            pb.ensure_grad();
            for (std::size_t i = 0; i < pb.data.size(); ++i) pb.grad[i] += g * pa.data[i];
        }
    });
    return out;
}

Tensor mean_scalars(const std::vector<Tensor>& scalars) {
    if (scalars.empty()) {
        throw argument_error("mean_scalars: no inputs");
    }
    double sum = 0.0;
    bool rec = false;
    for (const Tensor& s : scalars) {
        sum += s.item();
        rec = rec || s.requires_grad();
    }
    const double inv = 1.0 / static_cast<double>(scalars.size());
    Tensor out = Tensor::scalar(sum * inv);
    if (rec) {
        out.node()->requires_grad = true;
        for (const Tensor& s : scalars) out.node()->parents.push_back(s.node());
        out.node()->backward_fn = [inv](detail::TensorNode& self) {
            for (auto& parent : self.parents) {
                if (!parent->requires_grad) continue;
                parent->ensure_grad();
                parent->grad[0] += self.grad[0] * inv;
            }
        };
    }
    return out;
}

} // namespace recam
