#pragma once

#include <string>
#include <vector>

#include "ngfreg/errors.hpp"
#include "ngfreg/grid.hpp"
#include "ngfreg/similarity.hpp"

namespace ngfreg {

enum class Solver { semi_implicit, gauss_newton, lbfgs, trust_region };

std::string to_string(Solver s);
// Accepts "semi-implicit", "gauss-newton", "l-bfgs", "trust-region" (and
// underscore or undashed spellings).
Solver parse_solver(const std::string& name);

struct RegistrationConfig {
    double alpha = 5000.0;
    double eta = 0.1;
    double dt = 1.0;
    Solver solver = Solver::lbfgs;
    int max_levels = 4;
    int max_iters_per_level = 200;
    double rel_tolerance = 1e-6;
    Measure measure = Measure::ngf;
    MiOptions mi;
    int min_level_dimension = 32;

    // Throws ParameterError on out-of-range fields.
    void validate() const;
    MeasureOptions measure_options() const { return {eta, mi}; }

    static RegistrationConfig hs_to_lidar();   // alpha 5000, eta 0.1
    static RegistrationConfig photo_to_hs();   // alpha 1.5e5, eta 0.03
};

struct IterationRecord {
    int level = 0;
    int iteration = 0;
    double objective = 0.0;
    double distance = 0.0;
    double regularizer = 0.0;
    double step_norm = 0.0;
};

struct LevelSummary {
    int level = 0;
    int width = 0;
    int height = 0;
    double initial_objective = 0.0;
    double final_objective = 0.0;
    int iterations = 0;
    bool converged = false;
};

struct RegistrationTrace {
    std::vector<IterationRecord> records;
    std::vector<LevelSummary> levels;

    // One line per record, whitespace separated.
    std::string to_log() const;
    int total_iterations() const;
};

class DivergenceError : public Error {
public:
    DivergenceError(const std::string& what, RegistrationTrace trace, int level)
        : Error(what), trace_(std::move(trace)), level_(level) {}
    const RegistrationTrace& trace() const { return trace_; }
    int level() const { return level_; }

private:
    RegistrationTrace trace_;
    int level_;
};

struct ObjectiveValue {
    double objective = 0.0;
    double distance = 0.0;
    double regularizer = 0.0;  // alpha * curvature energy
    DisplacementField gradient;
};

// J(u) = D(T(x - u), R) + alpha/2 sum |L Q u|^2 and its gradient. T and R must
// share a shape and have unmasked values in [0, 1].
ObjectiveValue objective(const DisplacementField& u, const ScalarImage& T, const ScalarImage& R, const RegistrationConfig& cfg);

struct StepResult {
    DisplacementField u;
    double force_norm = 0.0;  // infinity norm of the distance force
};

// u+ = (I + dt alpha B)^{-1} (u - dt f(u)).
StepResult semi_implicit_step(const DisplacementField& u, const ScalarImage& T, const ScalarImage& R, const RegistrationConfig& cfg);

struct RegistrationResult {
    DisplacementField u;
    RegistrationTrace trace;
};

RegistrationResult register_level(const ScalarImage& T, const ScalarImage& R, const DisplacementField& u0, const RegistrationConfig& cfg,
                                  int level = 0);

RegistrationResult register_multilevel(const ScalarImage& T, const ScalarImage& R, const RegistrationConfig& cfg);

// Throws RangeError unless every unmasked value lies in [0, 1].
void require_normalized(const ScalarImage& image, const char* name);

}  // namespace ngfreg
