#include "apr/dynsys.hpp"
#include "apr/errors.hpp"

#include <cmath>

namespace apr {

Eigen::VectorXd DynamicalSystem::eval_rhs(const Eigen::VectorXd& x,
                                          const Eigen::VectorXd& u) const {
    Eigen::VectorXd dx(dim_state);
    rhs(x, u, dx);
    return dx;
}

Eigen::VectorXd DynamicalSystem::eval_rhs(const Eigen::VectorXd& x) const {
    return eval_rhs(x, Eigen::VectorXd::Zero(dim_input));
}

Eigen::MatrixXd DynamicalSystem::eval_jac_state(const Eigen::VectorXd& x,
                                                const Eigen::VectorXd& u) const {
    if (jac_state) {
        Eigen::MatrixXd J(dim_state, dim_state);
        jac_state(x, u, J);
        return J;
    }
    Eigen::MatrixXd J(dim_state, dim_state);
    Eigen::VectorXd xp = x, fp(dim_state), fm(dim_state);
    for (int i = 0; i < dim_state; ++i) {
        double h = 1e-6 * (1.0 + std::abs(x[i]));
        xp[i] = x[i] + h;
        rhs(xp, u, fp);
        xp[i] = x[i] - h;
        rhs(xp, u, fm);
        xp[i] = x[i];
        J.col(i) = (fp - fm) / (2.0 * h);
    }
    return J;
}

Eigen::MatrixXd DynamicalSystem::eval_jac_input(const Eigen::VectorXd& x,
                                                const Eigen::VectorXd& u) const {
    if (jac_input) {
        Eigen::MatrixXd B(dim_state, dim_input);
        jac_input(x, u, B);
        return B;
    }
    Eigen::MatrixXd B(dim_state, dim_input);
    Eigen::VectorXd up = u, fp(dim_state), fm(dim_state);
    for (int i = 0; i < dim_input; ++i) {
        double h = 1e-6 * (1.0 + std::abs(u[i]));
        up[i] = u[i] + h;
        rhs(x, up, fp);
        up[i] = u[i] - h;
        rhs(x, up, fm);
        up[i] = u[i];
        B.col(i) = (fp - fm) / (2.0 * h);
    }
    return B;
}

DynamicalSystem make_pendulum(const PendulumParams& p) {
    DynamicalSystem s;
    s.dim_state = 2;
    s.dim_input = 1;
    s.name = "pendulum";
    const double gl = p.gravity / p.length;
    const double ml2 = p.mass * p.length * p.length;
    const double bd = p.damping / ml2;
    s.rhs = [gl, ml2, bd](const Eigen::VectorXd& x, const Eigen::VectorXd& u,
                          Eigen::VectorXd& dx) {
        dx[0] = x[1];
        dx[1] = -gl * std::sin(x[0]) - bd * x[1] + u[0] / ml2;
    };
    s.jac_state = [gl, bd](const Eigen::VectorXd& x, const Eigen::VectorXd&,
                           Eigen::MatrixXd& J) {
        J(0, 0) = 0;
        J(0, 1) = 1;
        J(1, 0) = -gl * std::cos(x[0]);
        J(1, 1) = -bd;
    };
    s.jac_input = [ml2](const Eigen::VectorXd&, const Eigen::VectorXd&, Eigen::MatrixXd& B) {
        B(0, 0) = 0;
        B(1, 0) = 1.0 / ml2;
    };
    return s;
}

PlanarPopulationParams PlanarPopulationParams::standard() {
    PlanarPopulationParams p;
    p.mu.resize(p.count);
    p.rho.resize(p.count);
    for (int j = 0; j < p.count; ++j) {
        p.mu[j] = -4.0 + 2.0 * j / 9.0;
        p.rho[j] = 0.4 - j / 30.0;
    }
    return p;
}

DynamicalSystem make_planar_population(const PlanarPopulationParams& p) {
    if (p.mu.size() != p.count || p.rho.size() != p.count)
        throw ConfigError("planar population: mu/rho size mismatch");
    DynamicalSystem s;
    s.dim_state = 2 * p.count;
    s.dim_input = 1;
    s.name = "planar10";
    const int N = p.count;
    const double K = p.coupling, sig = p.sigma;
    const Eigen::VectorXd mu = p.mu, rho = p.rho;
    // State layout: (x_1, y_1, x_2, y_2, ...).
    s.rhs = [N, K, sig, mu, rho](const Eigen::VectorXd& z, const Eigen::VectorXd& u,
                                 Eigen::VectorXd& dz) {
        double xsum = 0;
        for (int i = 0; i < N; ++i) xsum += z[2 * i];
        for (int i = 0; i < N; ++i) {
            double x = z[2 * i], y = z[2 * i + 1];
            double r2 = x * x + y * y;
            double twist = 1.0 + rho[i] * (r2 - mu[i]);
            dz[2 * i] = sig * x * (mu[i] - r2) - y * twist + (K / N) * (xsum - x) + u[0];
            dz[2 * i + 1] = sig * y * (mu[i] - r2) + x * twist;
        }
    };
    s.jac_state = [N, K, sig, mu, rho](const Eigen::VectorXd& z, const Eigen::VectorXd&,
                                       Eigen::MatrixXd& J) {
        J.setZero();
        for (int i = 0; i < N; ++i) {
            double x = z[2 * i], y = z[2 * i + 1];
            double r2 = x * x + y * y;
            double twist = 1.0 + rho[i] * (r2 - mu[i]);
            J(2 * i, 2 * i) = sig * (mu[i] - r2) - 2 * sig * x * x - 2 * rho[i] * x * y;
            J(2 * i, 2 * i + 1) = -2 * sig * x * y - twist - 2 * rho[i] * y * y;
            J(2 * i + 1, 2 * i) = -2 * sig * x * y + twist + 2 * rho[i] * x * x;
            J(2 * i + 1, 2 * i + 1) = sig * (mu[i] - r2) - 2 * sig * y * y + 2 * rho[i] * x * y;
            for (int j = 0; j < N; ++j)
                if (j != i) J(2 * i, 2 * j) += K / N;
        }
    };
    s.jac_input = [N](const Eigen::VectorXd&, const Eigen::VectorXd&, Eigen::MatrixXd& B) {
        B.setZero();
        for (int i = 0; i < N; ++i) B(2 * i, 0) = 1.0;
    };
    return s;
}

PowerSystemParams PowerSystemParams::standard() {
    PowerSystemParams p;
    p.machines = 3;
    p.H.resize(3);
    p.H << 23.64, 6.40, 3.01;
    // Uniform damping ratio D_i/(2 H_i) = 1/2.
    p.D = p.H;
    p.P_m.resize(3);
    // Mechanical powers trimmed from the nominal dispatch (0.716, 1.63, 0.85)
    // so that generation balances electrical power exactly at the equilibrium
    // angles; otherwise the fixed point sits at a small common rotor-speed
    // offset instead of zero speed deviation.
    p.P_m << 0.7166579441, 1.6301781236, 0.8500837738;
    p.E.resize(3);
    p.E << 1.0566, 1.0502, 1.0170;
    p.G.resize(3, 3);
    p.B.resize(3, 3);
    p.G << 0.846, 0.287, 0.210,
           0.287, 0.420, 0.213,
           0.210, 0.213, 0.277;
    p.B << -2.988, 1.513, 1.226,
            1.513, -2.724, 1.088,
            1.226, 1.088, -2.368;
    return p;
}

DynamicalSystem build_phase_difference_model(const PowerSystemParams& p) {
    if (p.machines != 3)
        throw ConfigError("phase-difference model: only 3-machine networks supported");
    DynamicalSystem s;
    s.dim_state = 5;
    s.dim_input = 3;
    s.name = "ieee9bus";
    const double w0 = p.omega0;
    const Eigen::VectorXd H = p.H, D = p.D, Pm = p.P_m, E = p.E;
    const Eigen::MatrixXd G = p.G, B = p.B;
    // Electrical power for machine i given angle differences.
    auto pe = [E, G, B](double f12, double f13, Eigen::Vector3d& Pe, Eigen::Matrix<double, 3, 2>* dPe) {
        double s12 = E[0] * E[1] * G(0, 1), t12 = E[0] * E[1] * B(0, 1);
        double s13 = E[0] * E[2] * G(0, 2), t13 = E[0] * E[2] * B(0, 2);
        double s23 = E[1] * E[2] * G(1, 2), t23 = E[1] * E[2] * B(1, 2);
        double f23 = f13 - f12; // delta_2 - delta_3
        Pe[0] = E[0] * E[0] * G(0, 0) + s12 * std::cos(f12) + t12 * std::sin(f12) +
                s13 * std::cos(f13) + t13 * std::sin(f13);
        Pe[1] = E[1] * E[1] * G(1, 1) + s12 * std::cos(f12) - t12 * std::sin(f12) +
                s23 * std::cos(f23) + t23 * std::sin(f23);
        Pe[2] = E[2] * E[2] * G(2, 2) + s13 * std::cos(f13) - t13 * std::sin(f13) +
                s23 * std::cos(f23) - t23 * std::sin(f23);
        if (dPe) {
            (*dPe)(0, 0) = -s12 * std::sin(f12) + t12 * std::cos(f12);
            (*dPe)(0, 1) = -s13 * std::sin(f13) + t13 * std::cos(f13);
            (*dPe)(1, 0) = -s12 * std::sin(f12) - t12 * std::cos(f12) +
                           s23 * std::sin(f23) - t23 * std::cos(f23);
            (*dPe)(1, 1) = -s23 * std::sin(f23) + t23 * std::cos(f23);
            (*dPe)(2, 0) = s23 * std::sin(f23) + t23 * std::cos(f23);
            (*dPe)(2, 1) = -s13 * std::sin(f13) - t13 * std::cos(f13) -
                           s23 * std::sin(f23) - t23 * std::cos(f23);
        }
    };
    s.rhs = [w0, H, D, Pm, pe](const Eigen::VectorXd& x, const Eigen::VectorXd& u,
                               Eigen::VectorXd& dx) {
        Eigen::Vector3d Pe;
        pe(x[0], x[1], Pe, nullptr);
        dx[0] = x[2] - x[3];
        dx[1] = x[2] - x[4];
        for (int i = 0; i < 3; ++i)
            dx[2 + i] = w0 / (2.0 * H[i]) * (Pm[i] - D[i] * x[2 + i] / w0 - Pe[i]) + u[i];
    };
    s.jac_state = [w0, H, D, pe](const Eigen::VectorXd& x, const Eigen::VectorXd&,
                                 Eigen::MatrixXd& J) {
        Eigen::Vector3d Pe;
        Eigen::Matrix<double, 3, 2> dPe;
        pe(x[0], x[1], Pe, &dPe);
        J.setZero();
        J(0, 2) = 1;
        J(0, 3) = -1;
        J(1, 2) = 1;
        J(1, 4) = -1;
        for (int i = 0; i < 3; ++i) {
            double k = w0 / (2.0 * H[i]);
            J(2 + i, 0) = -k * dPe(i, 0);
            J(2 + i, 1) = -k * dPe(i, 1);
            J(2 + i, 2 + i) = -D[i] / (2.0 * H[i]);
        }
    };
    s.jac_input = [](const Eigen::VectorXd&, const Eigen::VectorXd&, Eigen::MatrixXd& B) {
        B.setZero();
        B(2, 0) = 1;
        B(3, 1) = 1;
        B(4, 2) = 1;
    };
    return s;
}

LinearizedModel linearized_model(const DynamicalSystem& sys, const Eigen::VectorXd& x_ss) {
    LinearizedModel lm;
    lm.x_ss = x_ss;
    Eigen::VectorXd u0 = Eigen::VectorXd::Zero(sys.dim_input);
    lm.A = sys.eval_jac_state(x_ss, u0);
    lm.B = sys.eval_jac_input(x_ss, u0);
    return lm;
}

DynamicalSystem make_system(const std::string& name) {
    if (name == "pendulum") return make_pendulum();
    if (name == "planar10") return make_planar_population();
    if (name == "ieee9bus") return build_phase_difference_model();
    throw ConfigError("unknown model '" + name + "' (expected pendulum, planar10, ieee9bus)");
}

Eigen::VectorXd default_guess(const std::string& name) {
    if (name == "pendulum") return Eigen::VectorXd::Zero(2);
    if (name == "planar10") return Eigen::VectorXd::Zero(20);
    if (name == "ieee9bus") {
        Eigen::VectorXd x(5);
        x << -0.30, -0.19, 0, 0, 0;
        return x;
    }
    throw ConfigError("unknown model '" + name + "'");
}

std::function<double(const Eigen::VectorXd&)> default_observable(const std::string& name) {
    if (name == "pendulum") return [](const Eigen::VectorXd& x) { return x[0]; };
    if (name == "planar10")
        return [](const Eigen::VectorXd& x) {
            double s = 0;
            for (int i = 0; i < 10; ++i) s += x[2 * i];
            return s / 10.0;
        };
    if (name == "ieee9bus") return [](const Eigen::VectorXd& x) { return x[1]; };
    throw ConfigError("unknown model '" + name + "'");
}

} // namespace apr
