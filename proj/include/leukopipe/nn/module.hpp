#pragma once

#include <functional>
#include <map>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "leukopipe/hashing.hpp"
#include "leukopipe/nn/tensor.hpp"

namespace leukopipe::nn {

/// A learnable tensor (with gradient) or a state buffer such as BatchNorm
/// running statistics (no gradient).
struct Parameter {
    Tensor value;
    Tensor grad;
    bool buffer = false;

    static Parameter learnable(std::vector<int> shape) {
        Parameter p;
        p.value = Tensor(shape);
        p.grad = Tensor(std::move(shape));
        return p;
    }
    static Parameter state(std::vector<int> shape, float fill) {
        Parameter p;
        p.value = Tensor(std::move(shape), fill);
        p.buffer = true;
        return p;
    }
};

struct ForwardContext {
    bool training = false;
    /// Source for dropout and stochastic-depth masks; required when training.
    Rng* rng = nullptr;
};

using ParameterVisitor = std::function<void(const std::string& name, Parameter& param)>;

/// Layer with an explicit backward pass. forward() caches what backward()
/// needs; backward() accumulates parameter gradients and returns the
/// gradient with respect to the last forward input.
class Module {
public:
    virtual ~Module() = default;

    virtual Tensor forward(const Tensor& x, ForwardContext& ctx) = 0;
    virtual Tensor backward(const Tensor& grad_out) = 0;

    /// Visits parameters and buffers with their dotted names.
    virtual void visit(const std::string& prefix, const ParameterVisitor& fn) {
        (void)prefix;
        (void)fn;
    }

    /// Random initialization of this module's parameters.
    virtual void init(Rng& rng) { (void)rng; }
};

using ModulePtr = std::unique_ptr<Module>;

/// Ordered named children, applied in sequence.
class Sequential : public Module {
public:
    Sequential() = default;

    Sequential& add(std::string name, ModulePtr module);
    Sequential& add(ModulePtr module) { return add(std::to_string(children_.size()), std::move(module)); }

    Tensor forward(const Tensor& x, ForwardContext& ctx) override;
    Tensor backward(const Tensor& grad_out) override;
    void visit(const std::string& prefix, const ParameterVisitor& fn) override;
    void init(Rng& rng) override;

    std::size_t size() const { return children_.size(); }
    Module& at(std::size_t i) { return *children_.at(i).second; }

private:
    std::vector<std::pair<std::string, ModulePtr>> children_;
};

/// Name -> parameter/buffer pointers, in visit order.
std::vector<std::pair<std::string, Parameter*>> named_parameters(Module& module, const std::string& prefix = "");

}  // namespace leukopipe::nn
