#ifndef TESTS_FD_CHECK_HPP
#define TESTS_FD_CHECK_HPP

// Central finite-difference oracle for gradient tests. Rebuilds the graph from
// scratch for every perturbed evaluation so no state leaks between calls.

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "tagkit/graph.hpp"
#include "tagkit/tensor.hpp"

namespace fd {

// Builds a scalar loss from variables created inside the supplied graph.
using LossFn = std::function<tagkit::Var(tagkit::Graph&, const std::vector<tagkit::Var>&)>;

struct Report {
    double max_rel_err = 0.0;
    std::string where;  // "input 2, element 17"
    int checked = 0;
};

inline double eval_loss(const LossFn& f, const std::vector<tagkit::Tensor>& inputs) {
    tagkit::Graph g;
    std::vector<tagkit::Var> xs;
    xs.reserve(inputs.size());
    for (const auto& t : inputs) xs.push_back(g.variable(t));
    return g.val(f(g, xs))[0];
}

// Checks d loss / d inputs[k][i] for every k and a stride-selected subset of i.
// Relative error uses max(1, |fd|, |an|) in the denominator so tiny gradients
// do not blow up the ratio.
inline Report check(const LossFn& f, std::vector<tagkit::Tensor> inputs, double h = 1e-5,
                    int stride = 1) {
    Report rep;
    // analytic pass
    tagkit::Graph g;
    std::vector<tagkit::Var> xs;
    for (const auto& t : inputs) xs.push_back(g.variable(t));
    tagkit::Var loss = f(g, xs);
    g.backward(loss);
    std::vector<tagkit::Tensor> analytic;
    for (auto x : xs) analytic.push_back(g.grad(x));

    for (std::size_t k = 0; k < inputs.size(); ++k) {
        for (std::size_t i = 0; i < inputs[k].size(); i += std::size_t(stride)) {
            double orig = inputs[k][i];
            inputs[k][i] = orig + h;
            double fp = eval_loss(f, inputs);
            inputs[k][i] = orig - h;
            double fm = eval_loss(f, inputs);
            inputs[k][i] = orig;
            double fdg = (fp - fm) / (2.0 * h);
            double an = analytic[k][i];
            double denom = std::max({1.0, std::fabs(fdg), std::fabs(an)});
            double rel = std::fabs(fdg - an) / denom;
            ++rep.checked;
            if (rel > rep.max_rel_err) {
                rep.max_rel_err = rel;
                rep.where = "input " + std::to_string(k) + ", element " + std::to_string(i);
            }
        }
    }
    return rep;
}

}  // namespace fd

#endif
