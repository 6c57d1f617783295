#include "dogpain/tape.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <memory>
#include <numeric>

#include "dogpain/rng.hpp"

namespace dogpain::num {

namespace {

template <typename T>
using EMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using EMap = Eigen::Map<EMat<T>>;
template <typename T>
using ECMap = Eigen::Map<const EMat<T>>;

template <typename T>
void require_same_shape(const char* op, const Tensor<T>& a, const Tensor<T>& b) {
  if (!a.same_shape(b))
    throw DimensionError(std::string(op) + ": shape mismatch " + a.shape_str() + " vs " +
                         b.shape_str());
}

// x: [Cin,H,W] -> col: [Cin*k*k, H*W], zero padding (k-1)/2.
template <typename T>
void im2col(const Tensor<T>& x, std::size_t k, std::vector<T>& col) {
  const std::size_t cin = x.extent(0), h = x.extent(1), w = x.extent(2);
  const std::ptrdiff_t r = static_cast<std::ptrdiff_t>(k) / 2;
  col.assign(cin * k * k * h * w, T(0));
  const T* src = x.data();
  for (std::size_t c = 0; c < cin; ++c) {
    for (std::size_t dy = 0; dy < k; ++dy) {
      for (std::size_t dx = 0; dx < k; ++dx) {
        T* dst = col.data() + ((c * k + dy) * k + dx) * (h * w);
        const std::ptrdiff_t oy = static_cast<std::ptrdiff_t>(dy) - r;
        const std::ptrdiff_t ox = static_cast<std::ptrdiff_t>(dx) - r;
        const std::size_t x0 = static_cast<std::size_t>(std::max<std::ptrdiff_t>(0, -ox));
        const std::size_t x1 =
            static_cast<std::size_t>(std::min<std::ptrdiff_t>(w, static_cast<std::ptrdiff_t>(w) - ox));
        for (std::size_t y = 0; y < h; ++y) {
          const std::ptrdiff_t sy = static_cast<std::ptrdiff_t>(y) + oy;
          if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(h) || x0 >= x1) continue;
          std::memcpy(dst + y * w + x0, src + (c * h + static_cast<std::size_t>(sy)) * w + x0 + ox,
                      (x1 - x0) * sizeof(T));
        }
      }
    }
  }
}

// Accumulates col: [Cin*k*k, H*W] back into dx: [Cin,H,W].
template <typename T>
void col2im_acc(const std::vector<T>& col, std::size_t k, Tensor<T>& dx) {
  const std::size_t cin = dx.extent(0), h = dx.extent(1), w = dx.extent(2);
  const std::ptrdiff_t r = static_cast<std::ptrdiff_t>(k) / 2;
  T* dst = dx.data();
  for (std::size_t c = 0; c < cin; ++c) {
    for (std::size_t dy = 0; dy < k; ++dy) {
      for (std::size_t dx_ = 0; dx_ < k; ++dx_) {
        const T* src = col.data() + ((c * k + dy) * k + dx_) * (h * w);
        const std::ptrdiff_t oy = static_cast<std::ptrdiff_t>(dy) - r;
        const std::ptrdiff_t ox = static_cast<std::ptrdiff_t>(dx_) - r;
        const std::size_t x0 = static_cast<std::size_t>(std::max<std::ptrdiff_t>(0, -ox));
        const std::size_t x1 =
            static_cast<std::size_t>(std::min<std::ptrdiff_t>(w, static_cast<std::ptrdiff_t>(w) - ox));
        for (std::size_t y = 0; y < h; ++y) {
          const std::ptrdiff_t sy = static_cast<std::ptrdiff_t>(y) + oy;
          if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(h) || x0 >= x1) continue;
          T* row = dst + (c * h + static_cast<std::size_t>(sy)) * w + ox;
          const T* srow = src + y * w;
          for (std::size_t xx = x0; xx < x1; ++xx) row[xx] += srow[xx];
        }
      }
    }
  }
}

}  // namespace

template <typename T>
Var Tape<T>::push(const char* op, std::vector<std::uint32_t> inputs, Tensor<T> value,
                  std::function<void(Tape<T>&, std::uint32_t)> backward) {
  if (check_finite_) value.require_finite(op);
  TapeNode<T> n;
  n.op = op;
  n.requires_grad = any_requires(inputs);
  n.inputs = std::move(inputs);
  n.value = std::move(value);
  if (n.requires_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

template <typename T>
bool Tape<T>::any_requires(const std::vector<std::uint32_t>& ids) const {
  for (auto id : ids)
    if (nodes_[id].requires_grad) return true;
  return false;
}

template <typename T>
Var Tape<T>::leaf(Tensor<T> value, bool requires_grad) {
  value.require_finite("leaf");
  TapeNode<T> n;
  n.op = "leaf";
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  nodes_.push_back(std::move(n));
  return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

template <typename T>
Tensor<T>& Tape<T>::adj(std::uint32_t id) {
  TapeNode<T>& n = nodes_[id];
  if (n.adjoint.empty()) n.adjoint = Tensor<T>(n.value.shape());
  return n.adjoint;
}

template <typename T>
const Tensor<T>& Tape<T>::grad(Var v) {
  return adj(v.id);
}

template <typename T>
void Tape<T>::backward(Var root, T seed) {
  const Tensor<T>& rv = node(root).value;
  if (rv.size() != 1)
    throw ContractError("backward: root must be scalar, got shape " + rv.shape_str());
  adj(root.id)[0] += seed;
  for (std::uint32_t id = root.id;; --id) {
    TapeNode<T>& n = nodes_[id];
    if (n.requires_grad && !n.adjoint.empty() && n.backward) n.backward(*this, id);
    if (id == 0) break;
  }
}

// ---------------------------------------------------------------------------
// elementwise family
// ---------------------------------------------------------------------------

template <typename T>
Var Tape<T>::add(Var a, Var b) {
  const Tensor<T>&av = node(a).value, &bv = node(b).value;
  // scalar broadcast on either side; otherwise shapes must match exactly
  if (av.size() == 1 && bv.size() > 1) return add(b, a);
  if (bv.size() == 1 && av.size() > 1) {
    Tensor<T> out(av.shape());
    const T s = bv[0];
    for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] + s;
    return push("add", {a.id, b.id}, std::move(out), [a, b](Tape<T>& t, std::uint32_t self) {
      const Tensor<T>& dy = t.node(self).adjoint;
      if (t.node(a).requires_grad) {
        Tensor<T>& da = t.adj(a.id);
        for (std::size_t i = 0; i < dy.size(); ++i) da[i] += dy[i];
      }
      if (t.node(b).requires_grad) {
        T s = 0;
        for (std::size_t i = 0; i < dy.size(); ++i) s += dy[i];
        t.adj(b.id)[0] += s;
      }
    });
  }
  require_same_shape("add", av, bv);
  Tensor<T> out(av.shape());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] + bv[i];
  return push("add", {a.id, b.id}, std::move(out), [a, b](Tape<T>& t, std::uint32_t self) {
    const Tensor<T>& dy = t.node(self).adjoint;
    for (Var v : {a, b}) {
      if (!t.node(v).requires_grad) continue;
      Tensor<T>& d = t.adj(v.id);
      for (std::size_t i = 0; i < dy.size(); ++i) d[i] += dy[i];
    }
  });
}

template <typename T>
Var Tape<T>::sub(Var a, Var b) {
  return add(a, scale(b, T(-1)));
}

template <typename T>
Var Tape<T>::hadamard(Var a, Var b) {
  const Tensor<T>&av = node(a).value, &bv = node(b).value;
  if (av.size() == 1 && bv.size() > 1) return hadamard(b, a);
  if (bv.size() == 1 && av.size() > 1) {
    Tensor<T> out(av.shape());
    const T s = bv[0];
    for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] * s;
    return push("hadamard", {a.id, b.id}, std::move(out), [a, b](Tape<T>& t, std::uint32_t self) {
      const Tensor<T>& dy = t.node(self).adjoint;
      const Tensor<T>& av2 = t.node(a).value;
      const T s = t.node(b).value[0];
      if (t.node(a).requires_grad) {
        Tensor<T>& da = t.adj(a.id);
        for (std::size_t i = 0; i < dy.size(); ++i) da[i] += dy[i] * s;
      }
      if (t.node(b).requires_grad) {
        T acc = 0;
        for (std::size_t i = 0; i < dy.size(); ++i) acc += dy[i] * av2[i];
        t.adj(b.id)[0] += acc;
      }
    });
  }
  require_same_shape("hadamard", av, bv);
  Tensor<T> out(av.shape());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] * bv[i];
  return push("hadamard", {a.id, b.id}, std::move(out), [a, b](Tape<T>& t, std::uint32_t self) {
    const Tensor<T>& dy = t.node(self).adjoint;
    const Tensor<T>&av2 = t.node(a).value, &bv2 = t.node(b).value;
    if (t.node(a).requires_grad) {
      Tensor<T>& da = t.adj(a.id);
      for (std::size_t i = 0; i < dy.size(); ++i) da[i] += dy[i] * bv2[i];
    }
    if (t.node(b).requires_grad) {
      Tensor<T>& db = t.adj(b.id);
      for (std::size_t i = 0; i < dy.size(); ++i) db[i] += dy[i] * av2[i];
    }
  });
}

template <typename T>
Var Tape<T>::scale(Var a, T k) {
  const Tensor<T>& av = node(a).value;
  Tensor<T> out(av.shape());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] * k;
  return push("scale", {a.id}, std::move(out), [a, k](Tape<T>& t, std::uint32_t self) {
    const Tensor<T>& dy = t.node(self).adjoint;
    Tensor<T>& da = t.adj(a.id);
    for (std::size_t i = 0; i < dy.size(); ++i) da[i] += dy[i] * k;
  });
}

template <typename T>
Var Tape<T>::sigmoid(Var a) {
  const Tensor<T>& av = node(a).value;
  Tensor<T> out(av.shape());
  for (std::size_t i = 0; i < av.size(); ++i) {
    const T x = av[i];
    out[i] = x >= 0 ? T(1) / (T(1) + std::exp(-x)) : std::exp(x) / (T(1) + std::exp(x));
  }
  return push("sigmoid", {a.id}, std::move(out), [a](Tape<T>& t, std::uint32_t self) {
    const TapeNode<T>& n = t.node(self);
    Tensor<T>& da = t.adj(a.id);
    for (std::size_t i = 0; i < n.value.size(); ++i) {
      const T s = n.value[i];
      da[i] += n.adjoint[i] * s * (T(1) - s);
    }
  });
}

template <typename T>
Var Tape<T>::tanh(Var a) {
  const Tensor<T>& av = node(a).value;
  Tensor<T> out(av.shape());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = std::tanh(av[i]);
  return push("tanh", {a.id}, std::move(out), [a](Tape<T>& t, std::uint32_t self) {
    const TapeNode<T>& n = t.node(self);
    Tensor<T>& da = t.adj(a.id);
    for (std::size_t i = 0; i < n.value.size(); ++i) {
      const T y = n.value[i];
      da[i] += n.adjoint[i] * (T(1) - y * y);
    }
  });
}

template <typename T>
Var Tape<T>::relu(Var a) {
  const Tensor<T>& av = node(a).value;
  Tensor<T> out(av.shape());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] > 0 ? av[i] : T(0);
  return push("relu", {a.id}, std::move(out), [a](Tape<T>& t, std::uint32_t self) {
    const TapeNode<T>& n = t.node(self);
    const Tensor<T>& av2 = t.node(a).value;
    Tensor<T>& da = t.adj(a.id);
    for (std::size_t i = 0; i < n.value.size(); ++i)
      if (av2[i] > 0) da[i] += n.adjoint[i];
  });
}

// ---------------------------------------------------------------------------
// linear algebra
// ---------------------------------------------------------------------------

template <typename T>
Var Tape<T>::matmul(Var a, Var b) {
  const Tensor<T>&av = node(a).value, &bv = node(b).value;
  if (av.ndim() != 2) throw DimensionError("matmul: left operand must be 2-D, got " + av.shape_str());
  const bool vec = bv.ndim() == 1;
  if (!vec && bv.ndim() != 2)
    throw DimensionError("matmul: right operand must be 1-D or 2-D, got " + bv.shape_str());
  const std::size_t m = av.extent(0), k = av.extent(1);
  const std::size_t k2 = bv.extent(0), n = vec ? 1 : bv.extent(1);
  if (k != k2)
    throw DimensionError("matmul: inner extents differ, " + av.shape_str() + " vs " + bv.shape_str());

  Tensor<T> out(vec ? std::vector<std::size_t>{m} : std::vector<std::size_t>{m, n});
  {
    ECMap<T> A(av.data(), m, k), B(bv.data(), k, n);
    EMap<T> C(out.data(), m, n);
    C.noalias() = A * B;
  }
  return push("matmul", {a.id, b.id}, std::move(out),
              [a, b, m, k, n](Tape<T>& t, std::uint32_t self) {
                const Tensor<T>& dyt = t.node(self).adjoint;
                ECMap<T> dY(dyt.data(), m, n);
                const Tensor<T>&av2 = t.node(a).value, &bv2 = t.node(b).value;
                if (t.node(a).requires_grad) {
                  ECMap<T> B(bv2.data(), k, n);
                  EMap<T> dA(t.adj(a.id).data(), m, k);
                  dA.noalias() += dY * B.transpose();
                }
                if (t.node(b).requires_grad) {
                  ECMap<T> A(av2.data(), m, k);
                  EMap<T> dB(t.adj(b.id).data(), k, n);
                  dB.noalias() += A.transpose() * dY;
                }
              });
}

template <typename T>
Var Tape<T>::dot(Var a, Var b) {
  const Tensor<T>&av = node(a).value, &bv = node(b).value;
  require_same_shape("dot", av, bv);
  T acc = 0;
  for (std::size_t i = 0; i < av.size(); ++i) acc += av[i] * bv[i];
  return push("dot", {a.id, b.id}, Tensor<T>::scalar(acc), [a, b](Tape<T>& t, std::uint32_t self) {
    const T dy = t.node(self).adjoint[0];
    const Tensor<T>&av2 = t.node(a).value, &bv2 = t.node(b).value;
    if (t.node(a).requires_grad) {
      Tensor<T>& da = t.adj(a.id);
      for (std::size_t i = 0; i < bv2.size(); ++i) da[i] += dy * bv2[i];
    }
    if (t.node(b).requires_grad) {
      Tensor<T>& db = t.adj(b.id);
      for (std::size_t i = 0; i < av2.size(); ++i) db[i] += dy * av2[i];
    }
  });
}

template <typename T>
Var Tape<T>::conv2d(Var x, Var kernels) {
  const Tensor<T>&xv = node(x).value, &wv = node(kernels).value;
  if (xv.ndim() != 3)
    throw DimensionError("conv2d: input must be [Cin,H,W], got " + xv.shape_str());
  if (wv.ndim() != 4)
    throw DimensionError("conv2d: kernels must be [Cout,Cin,k,k], got " + wv.shape_str());
  const std::size_t cin = xv.extent(0), h = xv.extent(1), w = xv.extent(2);
  const std::size_t cout = wv.extent(0), k = wv.extent(2);
  if (wv.extent(1) != cin)
    throw DimensionError("conv2d: kernel input channels " + wv.shape_str() +
                         " do not match input " + xv.shape_str());
  if (wv.extent(3) != k) throw DimensionError("conv2d: kernels must be square, got " + wv.shape_str());
  if (k % 2 == 0) throw ConfigError("conv2d: kernel extent must be odd, got " + std::to_string(k));

  std::vector<T> col;
  im2col(xv, k, col);
  Tensor<T> out({cout, h, w});
  {
    ECMap<T> W(wv.data(), cout, cin * k * k);
    ECMap<T> C(col.data(), cin * k * k, h * w);
    EMap<T> Y(out.data(), cout, h * w);
    Y.noalias() = W * C;
  }
  return push("conv2d", {x.id, kernels.id}, std::move(out),
              [x, kernels, cin, cout, h, w, k](Tape<T>& t, std::uint32_t self) {
                const Tensor<T>& dyt = t.node(self).adjoint;
                ECMap<T> dY(dyt.data(), cout, h * w);
                const bool need_dx = t.node(x).requires_grad;
                const bool need_dw = t.node(kernels).requires_grad;
                if (need_dw) {
                  std::vector<T> col;
                  im2col(t.node(x).value, k, col);
                  ECMap<T> C(col.data(), cin * k * k, h * w);
                  EMap<T> dW(t.adj(kernels.id).data(), cout, cin * k * k);
                  dW.noalias() += dY * C.transpose();
                }
                if (need_dx) {
                  std::vector<T> dcol(cin * k * k * h * w);
                  ECMap<T> W(t.node(kernels).value.data(), cout, cin * k * k);
                  EMap<T> dC(dcol.data(), cin * k * k, h * w);
                  dC.noalias() = W.transpose() * dY;
                  col2im_acc(dcol, k, t.adj(x.id));
                }
              });
}

template <typename T>
Var Tape<T>::bias_chan(Var x, Var bias) {
  const Tensor<T>&xv = node(x).value, &bv = node(bias).value;
  if (xv.ndim() != 3 || bv.ndim() != 1 || bv.extent(0) != xv.extent(0))
    throw DimensionError("bias_chan: expected [C,H,W] and [C], got " + xv.shape_str() + " and " +
                         bv.shape_str());
  const std::size_t c = xv.extent(0), hw = xv.extent(1) * xv.extent(2);
  Tensor<T> out(xv.shape());
  for (std::size_t ci = 0; ci < c; ++ci)
    for (std::size_t i = 0; i < hw; ++i) out[ci * hw + i] = xv[ci * hw + i] + bv[ci];
  return push("bias_chan", {x.id, bias.id}, std::move(out),
              [x, bias, c, hw](Tape<T>& t, std::uint32_t self) {
                const Tensor<T>& dy = t.node(self).adjoint;
                if (t.node(x).requires_grad) {
                  Tensor<T>& dx = t.adj(x.id);
                  for (std::size_t i = 0; i < dy.size(); ++i) dx[i] += dy[i];
                }
                if (t.node(bias).requires_grad) {
                  Tensor<T>& db = t.adj(bias.id);
                  for (std::size_t ci = 0; ci < c; ++ci) {
                    T acc = 0;
                    for (std::size_t i = 0; i < hw; ++i) acc += dy[ci * hw + i];
                    db[ci] += acc;
                  }
                }
              });
}

// ---------------------------------------------------------------------------
// reductions and shape ops
// ---------------------------------------------------------------------------

template <typename T>
Var Tape<T>::softmax(Var v) {
  const Tensor<T>& xv = node(v).value;
  if (xv.ndim() != 1) throw DimensionError("softmax: input must be 1-D, got " + xv.shape_str());
  const std::size_t n = xv.size();
  T mx = xv[0];
  for (std::size_t i = 1; i < n; ++i) mx = std::max(mx, xv[i]);
  Tensor<T> out(xv.shape());
  T denom = 0;
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = std::exp(xv[i] - mx);
    denom += out[i];
  }
  for (std::size_t i = 0; i < n; ++i) out[i] /= denom;
  return push("softmax", {v.id}, std::move(out), [v](Tape<T>& t, std::uint32_t self) {
    const TapeNode<T>& n = t.node(self);
    const std::size_t sz = n.value.size();
    T inner = 0;
    for (std::size_t i = 0; i < sz; ++i) inner += n.adjoint[i] * n.value[i];
    Tensor<T>& dx = t.adj(v.id);
    for (std::size_t i = 0; i < sz; ++i) dx[i] += n.value[i] * (n.adjoint[i] - inner);
  });
}

template <typename T>
Var Tape<T>::maxpool2(Var x) {
  const Tensor<T>& xv = node(x).value;
  if (xv.ndim() != 3) throw DimensionError("maxpool2: input must be [C,H,W], got " + xv.shape_str());
  const std::size_t c = xv.extent(0), h = xv.extent(1), w = xv.extent(2);
  const std::size_t oh = (h + 1) / 2, ow = (w + 1) / 2;
  Tensor<T> out({c, oh, ow});
  auto argmax = std::make_shared<std::vector<std::uint32_t>>(c * oh * ow);
  for (std::size_t ci = 0; ci < c; ++ci) {
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        T best = -std::numeric_limits<T>::infinity();
        std::uint32_t bi = 0;
        // first index in row-major order wins ties
        for (std::size_t dy = 0; dy < 2; ++dy) {
          for (std::size_t dx = 0; dx < 2; ++dx) {
            const std::size_t yy = oy * 2 + dy, xx = ox * 2 + dx;
            if (yy >= h || xx >= w) continue;
            const std::size_t idx = (ci * h + yy) * w + xx;
            if (xv[idx] > best) {
              best = xv[idx];
              bi = static_cast<std::uint32_t>(idx);
            }
          }
        }
        out.at3(ci, oy, ox) = best;
        (*argmax)[(ci * oh + oy) * ow + ox] = bi;
      }
    }
  }
  return push("maxpool2", {x.id}, std::move(out),
              [x, argmax](Tape<T>& t, std::uint32_t self) {
                const Tensor<T>& dy = t.node(self).adjoint;
                Tensor<T>& dx = t.adj(x.id);
                for (std::size_t i = 0; i < dy.size(); ++i) dx[(*argmax)[i]] += dy[i];
              });
}

template <typename T>
Var Tape<T>::sum(Var a) {
  const Tensor<T>& av = node(a).value;
  T acc = 0;
  for (std::size_t i = 0; i < av.size(); ++i) acc += av[i];
  return push("sum", {a.id}, Tensor<T>::scalar(acc), [a](Tape<T>& t, std::uint32_t self) {
    const T dy = t.node(self).adjoint[0];
    Tensor<T>& da = t.adj(a.id);
    for (std::size_t i = 0; i < da.size(); ++i) da[i] += dy;
  });
}

template <typename T>
Var Tape<T>::global_avg_pool(Var x) {
  const Tensor<T>& xv = node(x).value;
  if (xv.ndim() != 3)
    throw DimensionError("global_avg_pool: input must be [C,H,W], got " + xv.shape_str());
  const std::size_t c = xv.extent(0), hw = xv.extent(1) * xv.extent(2);
  Tensor<T> out({c});
  for (std::size_t ci = 0; ci < c; ++ci) {
    T acc = 0;
    for (std::size_t i = 0; i < hw; ++i) acc += xv[ci * hw + i];
    out[ci] = acc / static_cast<T>(hw);
  }
  return push("gap", {x.id}, std::move(out), [x, c, hw](Tape<T>& t, std::uint32_t self) {
    const Tensor<T>& dy = t.node(self).adjoint;
    Tensor<T>& dx = t.adj(x.id);
    const T inv = T(1) / static_cast<T>(hw);
    for (std::size_t ci = 0; ci < c; ++ci)
      for (std::size_t i = 0; i < hw; ++i) dx[ci * hw + i] += dy[ci] * inv;
  });
}

template <typename T>
Var Tape<T>::concat(Var a, Var b) {
  const Tensor<T>&av = node(a).value, &bv = node(b).value;
  if (av.ndim() != 1 || bv.ndim() != 1)
    throw DimensionError("concat: operands must be 1-D, got " + av.shape_str() + " and " +
                         bv.shape_str());
  Tensor<T> out({av.size() + bv.size()});
  std::copy(av.data(), av.data() + av.size(), out.data());
  std::copy(bv.data(), bv.data() + bv.size(), out.data() + av.size());
  const std::size_t split = av.size();
  return push("concat", {a.id, b.id}, std::move(out),
              [a, b, split](Tape<T>& t, std::uint32_t self) {
                const Tensor<T>& dy = t.node(self).adjoint;
                if (t.node(a).requires_grad) {
                  Tensor<T>& da = t.adj(a.id);
                  for (std::size_t i = 0; i < split; ++i) da[i] += dy[i];
                }
                if (t.node(b).requires_grad) {
                  Tensor<T>& db = t.adj(b.id);
                  for (std::size_t i = split; i < dy.size(); ++i) db[i - split] += dy[i];
                }
              });
}

template <typename T>
Var Tape<T>::slice(Var v, std::size_t i0, std::size_t i1) {
  const Tensor<T>& xv = node(v).value;
  if (xv.ndim() != 1) throw DimensionError("slice: input must be 1-D, got " + xv.shape_str());
  if (i0 >= i1 || i1 > xv.size()) throw DimensionError("slice: bad range");
  Tensor<T> out({i1 - i0});
  std::copy(xv.data() + i0, xv.data() + i1, out.data());
  return push("slice", {v.id}, std::move(out), [v, i0, i1](Tape<T>& t, std::uint32_t self) {
    const Tensor<T>& dy = t.node(self).adjoint;
    Tensor<T>& dx = t.adj(v.id);
    for (std::size_t i = i0; i < i1; ++i) dx[i] += dy[i - i0];
  });
}

template <typename T>
Var Tape<T>::slice_chan(Var x, std::size_t c0, std::size_t c1) {
  const Tensor<T>& xv = node(x).value;
  if (xv.ndim() != 3) throw DimensionError("slice_chan: input must be [C,H,W], got " + xv.shape_str());
  if (c0 >= c1 || c1 > xv.extent(0)) throw DimensionError("slice_chan: bad channel range");
  const std::size_t hw = xv.extent(1) * xv.extent(2);
  Tensor<T> out({c1 - c0, xv.extent(1), xv.extent(2)});
  std::copy(xv.data() + c0 * hw, xv.data() + c1 * hw, out.data());
  return push("slice_chan", {x.id}, std::move(out),
              [x, c0, c1, hw](Tape<T>& t, std::uint32_t self) {
                const Tensor<T>& dy = t.node(self).adjoint;
                Tensor<T>& dx = t.adj(x.id);
                for (std::size_t i = 0; i < dy.size(); ++i) dx[c0 * hw + i] += dy[i];
              });
}

template <typename T>
Var Tape<T>::stack_steps(const std::vector<Var>& xs) {
  if (xs.empty()) throw DimensionError("stack_steps: empty input");
  const Tensor<T>& first = node(xs[0]).value;
  if (first.ndim() != 3) throw DimensionError("stack_steps: inputs must be [C,H,W]");
  std::vector<std::uint32_t> ids;
  Tensor<T> out({xs.size(), first.extent(0), first.extent(1), first.extent(2)});
  const std::size_t chw = first.size();
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const Tensor<T>& v = node(xs[i]).value;
    require_same_shape("stack_steps", first, v);
    std::copy(v.data(), v.data() + chw, out.data() + i * chw);
    ids.push_back(xs[i].id);
  }
  auto inputs = std::make_shared<std::vector<Var>>(xs);
  return push("stack_steps", std::move(ids), std::move(out),
              [inputs, chw](Tape<T>& t, std::uint32_t self) {
                const Tensor<T>& dy = t.node(self).adjoint;
                for (std::size_t i = 0; i < inputs->size(); ++i) {
                  Var v = (*inputs)[i];
                  if (!t.node(v).requires_grad) continue;
                  Tensor<T>& dx = t.adj(v.id);
                  const T* src = dy.data() + i * chw;
                  for (std::size_t j = 0; j < chw; ++j) dx[j] += src[j];
                }
              });
}

template <typename T>
Var Tape<T>::slice_step(Var x, std::size_t n) {
  const Tensor<T>& xv = node(x).value;
  if (xv.ndim() != 4) throw DimensionError("slice_step: input must be [N,C,H,W]");
  if (n >= xv.extent(0)) throw DimensionError("slice_step: index out of range");
  const std::size_t chw = xv.extent(1) * xv.extent(2) * xv.extent(3);
  Tensor<T> out({xv.extent(1), xv.extent(2), xv.extent(3)});
  std::copy(xv.data() + n * chw, xv.data() + (n + 1) * chw, out.data());
  return push("slice_step", {x.id}, std::move(out), [x, n, chw](Tape<T>& t, std::uint32_t self) {
    const Tensor<T>& dy = t.node(self).adjoint;
    Tensor<T>& dx = t.adj(x.id);
    for (std::size_t j = 0; j < chw; ++j) dx[n * chw + j] += dy[j];
  });
}

template <typename T>
Var Tape<T>::stack_scalars(const std::vector<Var>& xs) {
  if (xs.empty()) throw DimensionError("stack_scalars: empty input");
  std::vector<std::uint32_t> ids;
  Tensor<T> out({xs.size()});
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const Tensor<T>& v = node(xs[i]).value;
    if (v.size() != 1) throw DimensionError("stack_scalars: inputs must be scalar");
    out[i] = v[0];
    ids.push_back(xs[i].id);
  }
  auto inputs = std::make_shared<std::vector<Var>>(xs);
  return push("stack_scalars", std::move(ids), std::move(out),
              [inputs](Tape<T>& t, std::uint32_t self) {
                const Tensor<T>& dy = t.node(self).adjoint;
                for (std::size_t i = 0; i < inputs->size(); ++i) {
                  Var v = (*inputs)[i];
                  if (t.node(v).requires_grad) t.adj(v.id)[0] += dy[i];
                }
              });
}

template <typename T>
Var Tape<T>::weighted_sum(Var weights, const std::vector<Var>& annotations) {
  const Tensor<T>& wv = node(weights).value;
  if (annotations.empty()) throw ContractError("weighted_sum: no annotations");
  if (wv.ndim() != 1 || wv.size() != annotations.size())
    throw DimensionError("weighted_sum: weight count does not match annotation count");
  const Tensor<T>& first = node(annotations[0]).value;
  Tensor<T> out(first.shape());
  std::vector<std::uint32_t> ids{weights.id};
  for (std::size_t j = 0; j < annotations.size(); ++j) {
    const Tensor<T>& bj = node(annotations[j]).value;
    require_same_shape("weighted_sum", first, bj);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += wv[j] * bj[i];
    ids.push_back(annotations[j].id);
  }
  auto anns = std::make_shared<std::vector<Var>>(annotations);
  return push("weighted_sum", std::move(ids), std::move(out),
              [weights, anns](Tape<T>& t, std::uint32_t self) {
                const Tensor<T>& dy = t.node(self).adjoint;
                const Tensor<T>& wv2 = t.node(weights).value;
                const bool need_dw = t.node(weights).requires_grad;
                for (std::size_t j = 0; j < anns->size(); ++j) {
                  Var bj = (*anns)[j];
                  const Tensor<T>& bv = t.node(bj).value;
                  if (t.node(bj).requires_grad) {
                    Tensor<T>& db = t.adj(bj.id);
                    for (std::size_t i = 0; i < dy.size(); ++i) db[i] += wv2[j] * dy[i];
                  }
                  if (need_dw) {
                    T acc = 0;
                    for (std::size_t i = 0; i < dy.size(); ++i) acc += bv[i] * dy[i];
                    t.adj(weights.id)[j] += acc;
                  }
                }
              });
}

// ---------------------------------------------------------------------------
// normalization
// ---------------------------------------------------------------------------

template <typename T>
Var Tape<T>::batchnorm_train(Var x, Var gamma, Var beta, T eps, BatchStats<T>* stats) {
  const Tensor<T>& xv = node(x).value;
  if (xv.ndim() != 4)
    throw DimensionError("batchnorm: input must be [N,C,H,W], got " + xv.shape_str());
  const std::size_t n = xv.extent(0), c = xv.extent(1), hw = xv.extent(2) * xv.extent(3);
  const Tensor<T>&gv = node(gamma).value, &bv = node(beta).value;
  if (gv.size() != c || bv.size() != c)
    throw DimensionError("batchnorm: gamma/beta must have one entry per channel");

  const std::size_t cnt = n * hw;
  auto mean = std::make_shared<Tensor<T>>(std::vector<std::size_t>{c});
  auto inv_std = std::make_shared<Tensor<T>>(std::vector<std::size_t>{c});
  Tensor<T> var({c});
  for (std::size_t ci = 0; ci < c; ++ci) {
    T s = 0;
    for (std::size_t ni = 0; ni < n; ++ni) {
      const T* p = xv.data() + (ni * c + ci) * hw;
      for (std::size_t i = 0; i < hw; ++i) s += p[i];
    }
    const T mu = s / static_cast<T>(cnt);
    T v = 0;
    for (std::size_t ni = 0; ni < n; ++ni) {
      const T* p = xv.data() + (ni * c + ci) * hw;
      for (std::size_t i = 0; i < hw; ++i) v += (p[i] - mu) * (p[i] - mu);
    }
    v /= static_cast<T>(cnt);
    (*mean)[ci] = mu;
    var[ci] = v;
    (*inv_std)[ci] = T(1) / std::sqrt(v + eps);
  }
  if (stats) {
    stats->mean = *mean;
    stats->var = var;
  }

  Tensor<T> out(xv.shape());
  for (std::size_t ni = 0; ni < n; ++ni) {
    for (std::size_t ci = 0; ci < c; ++ci) {
      const T* p = xv.data() + (ni * c + ci) * hw;
      T* q = out.data() + (ni * c + ci) * hw;
      const T mu = (*mean)[ci], is = (*inv_std)[ci], g = gv[ci], b = bv[ci];
      for (std::size_t i = 0; i < hw; ++i) q[i] = g * (p[i] - mu) * is + b;
    }
  }
  return push(
      "batchnorm", {x.id, gamma.id, beta.id}, std::move(out),
      [x, gamma, beta, mean, inv_std, n, c, hw](Tape<T>& t, std::uint32_t self) {
        const Tensor<T>& dy = t.node(self).adjoint;
        const Tensor<T>& xv2 = t.node(x).value;
        const Tensor<T>& gv2 = t.node(gamma).value;
        const std::size_t cnt = n * hw;
        const bool need_dx = t.node(x).requires_grad;
        const bool need_dg = t.node(gamma).requires_grad;
        const bool need_db = t.node(beta).requires_grad;
        for (std::size_t ci = 0; ci < c; ++ci) {
          const T mu = (*mean)[ci], is = (*inv_std)[ci];
          T sum_dy = 0, sum_dy_xhat = 0;
          for (std::size_t ni = 0; ni < n; ++ni) {
            const T* px = xv2.data() + (ni * c + ci) * hw;
            const T* pd = dy.data() + (ni * c + ci) * hw;
            for (std::size_t i = 0; i < hw; ++i) {
              sum_dy += pd[i];
              sum_dy_xhat += pd[i] * (px[i] - mu) * is;
            }
          }
          if (need_dg) t.adj(gamma.id)[ci] += sum_dy_xhat;
          if (need_db) t.adj(beta.id)[ci] += sum_dy;
          if (need_dx) {
            Tensor<T>& dx = t.adj(x.id);
            const T g = gv2[ci];
            const T m_dy = sum_dy / static_cast<T>(cnt);
            const T m_dyx = sum_dy_xhat / static_cast<T>(cnt);
            for (std::size_t ni = 0; ni < n; ++ni) {
              const T* px = xv2.data() + (ni * c + ci) * hw;
              const T* pd = dy.data() + (ni * c + ci) * hw;
              T* pq = dx.data() + (ni * c + ci) * hw;
              for (std::size_t i = 0; i < hw; ++i) {
                const T xhat = (px[i] - mu) * is;
                pq[i] += g * is * (pd[i] - m_dy - xhat * m_dyx);
              }
            }
          }
        }
      });
}

template <typename T>
Var Tape<T>::batchnorm_infer(Var x, Var gamma, Var beta, const Tensor<T>& mean,
                             const Tensor<T>& var, T eps) {
  const Tensor<T>& xv = node(x).value;
  if (xv.ndim() != 4)
    throw DimensionError("batchnorm: input must be [N,C,H,W], got " + xv.shape_str());
  const std::size_t n = xv.extent(0), c = xv.extent(1), hw = xv.extent(2) * xv.extent(3);
  const Tensor<T>&gv = node(gamma).value, &bv = node(beta).value;
  if (gv.size() != c || bv.size() != c || mean.size() != c || var.size() != c)
    throw DimensionError("batchnorm: per-channel parameter size mismatch");
  auto inv_std = std::make_shared<Tensor<T>>(std::vector<std::size_t>{c});
  auto mu = std::make_shared<Tensor<T>>(mean);
  for (std::size_t ci = 0; ci < c; ++ci) (*inv_std)[ci] = T(1) / std::sqrt(var[ci] + eps);

  Tensor<T> out(xv.shape());
  for (std::size_t ni = 0; ni < n; ++ni) {
    for (std::size_t ci = 0; ci < c; ++ci) {
      const T* p = xv.data() + (ni * c + ci) * hw;
      T* q = out.data() + (ni * c + ci) * hw;
      const T m = (*mu)[ci], is = (*inv_std)[ci], g = gv[ci], b = bv[ci];
      for (std::size_t i = 0; i < hw; ++i) q[i] = g * (p[i] - m) * is + b;
    }
  }
  return push("batchnorm_infer", {x.id, gamma.id, beta.id}, std::move(out),
              [x, gamma, beta, mu, inv_std, n, c, hw](Tape<T>& t, std::uint32_t self) {
                const Tensor<T>& dy = t.node(self).adjoint;
                const Tensor<T>& xv2 = t.node(x).value;
                const Tensor<T>& gv2 = t.node(gamma).value;
                const bool need_dx = t.node(x).requires_grad;
                const bool need_dg = t.node(gamma).requires_grad;
                const bool need_db = t.node(beta).requires_grad;
                for (std::size_t ci = 0; ci < c; ++ci) {
                  const T m = (*mu)[ci], is = (*inv_std)[ci], g = gv2[ci];
                  T sum_dy = 0, sum_dy_xhat = 0;
                  for (std::size_t ni = 0; ni < n; ++ni) {
                    const T* px = xv2.data() + (ni * c + ci) * hw;
                    const T* pd = dy.data() + (ni * c + ci) * hw;
                    T* pq = need_dx ? t.adj(x.id).data() + (ni * c + ci) * hw : nullptr;
                    for (std::size_t i = 0; i < hw; ++i) {
                      sum_dy += pd[i];
                      sum_dy_xhat += pd[i] * (px[i] - m) * is;
                      if (pq) pq[i] += pd[i] * g * is;
                    }
                  }
                  if (need_dg) t.adj(gamma.id)[ci] += sum_dy_xhat;
                  if (need_db) t.adj(beta.id)[ci] += sum_dy;
                }
              });
}

// ---------------------------------------------------------------------------
// losses
// ---------------------------------------------------------------------------

template <typename T>
Var Tape<T>::bce(Var p, T label) {
  if (label != T(0) && label != T(1))
    throw ContractError("bce: label must be 0 or 1, got " + std::to_string(label));
  const Tensor<T>& pv = node(p).value;
  if (pv.size() != 1) throw DimensionError("bce: probability must be scalar");
  const T lo = T(1e-7), hi = T(1) - T(1e-7);
  const T pc = std::min(hi, std::max(lo, pv[0]));
  const T loss = -(label * std::log(pc) + (T(1) - label) * std::log(T(1) - pc));
  return push("bce", {p.id}, Tensor<T>::scalar(loss),
              [p, label, lo, hi](Tape<T>& t, std::uint32_t self) {
                const T dy = t.node(self).adjoint[0];
                const T praw = t.node(p).value[0];
                if (praw < lo || praw > hi) return;  // clamped: zero gradient
                t.adj(p.id)[0] += dy * (-label / praw + (T(1) - label) / (T(1) - praw));
              });
}

// ---------------------------------------------------------------------------
// finite-difference oracle
// ---------------------------------------------------------------------------

template <typename T>
T grad_check(const std::function<Var(Tape<T>&, Var)>& fn, const Tensor<T>& point, T eps,
             long max_coords, std::uint64_t sample_seed) {
  Tensor<T> analytic;
  {
    Tape<T> tape;
    Var x = tape.leaf(point, /*requires_grad=*/true);
    Var y = fn(tape, x);
    if (tape.value(y).size() != 1)
      throw ContractError("grad_check: function must be scalar-valued, got shape " +
                          tape.value(y).shape_str());
    tape.backward(y);
    analytic = tape.grad(x);
  }

  auto eval = [&fn](const Tensor<T>& at) -> T {
    Tape<T> tape;
    Var x = tape.leaf(at, false);
    Var y = fn(tape, x);
    return tape.value(y)[0];
  };

  std::vector<std::size_t> coords(point.size());
  std::iota(coords.begin(), coords.end(), std::size_t{0});
  if (max_coords >= 0 && static_cast<std::size_t>(max_coords) < coords.size()) {
    RandomStream rs(sample_seed);
    rs.shuffle(coords);
    coords.resize(static_cast<std::size_t>(max_coords));
  }

  T worst = 0;
  Tensor<T> probe = point;
  for (std::size_t i : coords) {
    const T orig = probe[i];
    probe[i] = orig + eps;
    const T fp = eval(probe);
    probe[i] = orig - eps;
    const T fm = eval(probe);
    probe[i] = orig;
    const T numeric = (fp - fm) / (2 * eps);
    const T denom = std::max(T(1), std::max(std::abs(analytic[i]), std::abs(numeric)));
    worst = std::max(worst, std::abs(analytic[i] - numeric) / denom);
  }
  return worst;
}

template class Tape<float>;
template class Tape<double>;
template float grad_check<float>(const std::function<Var(Tape<float>&, Var)>&,
                                 const Tensor<float>&, float, long, std::uint64_t);
template double grad_check<double>(const std::function<Var(Tape<double>&, Var)>&,
                                   const Tensor<double>&, double, long, std::uint64_t);

}  // namespace dogpain::num
