# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled rollout loops (hot path of policy training and evaluation).

These transcribe the loops in ``_rollout_py`` one-to-one: same noise
consumption order, same formula order, so results agree with the pure
python backend to floating-point noise. Supports exactly two hidden
layers in the policy/value networks; other depths fall back to python.
"""

from libc.math cimport cos, exp, fabs, sin, tanh

cdef double LN_2PI = 1.8378770664093453
cdef double POLE_HALF_LENGTH = 0.5
cdef double THETA_LIMIT = 0.2
cdef double X_LIMIT = 2.4
cdef double POINTMASS_TARGET = 1.0
cdef double ACTION_COST = 1e-3

cdef int MAX_HIDDEN = 512
cdef int MAX_DIM = 16


cdef inline void matvec(const double* x, Py_ssize_t nin, double[:, ::1] w,
                        double* out, Py_ssize_t nout) noexcept nogil:
    # out[j] = sum_i x[i] * w[i, j]; i-major iteration keeps the inner loop
    # contiguous in w while preserving the per-element summation order.
    cdef Py_ssize_t i, j
    cdef double xi
    for j in range(nout):
        out[j] = 0.0
    for i in range(nin):
        xi = x[i]
        for j in range(nout):
            out[j] += xi * w[i, j]


cdef inline void mlp3(const double* x, Py_ssize_t nin,
                      double[:, ::1] w0, double[::1] b0,
                      double[:, ::1] w1, double[::1] b1,
                      double[:, ::1] w2, double[::1] b2,
                      double* h1, double* h2, double* out) noexcept nogil:
    cdef Py_ssize_t j
    cdef Py_ssize_t n1 = b0.shape[0], n2 = b1.shape[0], nout = b2.shape[0]
    matvec(x, nin, w0, h1, n1)
    for j in range(n1):
        h1[j] = tanh(h1[j] + b0[j])
    matvec(h1, n1, w1, h2, n2)
    for j in range(n2):
        h2[j] = tanh(h2[j] + b1[j])
    matvec(h2, n2, w2, out, nout)
    for j in range(nout):
        out[j] = out[j] + b2[j]


cdef inline double clip_scalar(double v, double lo, double hi) noexcept nogil:
    if v < lo:
        return lo
    if v > hi:
        return hi
    return v


cdef inline double step_env(int env_idx, double* s, double u, const double* p,
                            double dt, double incline, bint* failed) noexcept nogil:
    """Advance state in place, return the reward; mirrors envsim.step_raw."""
    cdef double acc, x2, v2, reward
    cdef double total_mass, pml, sin_th, cos_th, temp, th_acc, x_acc
    cdef double xd2, thd2, th2
    if env_idx == 0:  # pointmass: p = (mass, damping, gravity)
        acc = (u - p[1] * s[1] - p[0] * p[2] * sin(incline)) / p[0]
        v2 = s[1] + dt * acc
        x2 = s[0] + dt * v2
        s[0] = x2
        s[1] = v2
        failed[0] = False
        return -(x2 - POINTMASS_TARGET) * (x2 - POINTMASS_TARGET) - ACTION_COST * u * u
    # cartpole: p = (cart mass, pole mass, cart damping, pole damping, gravity)
    total_mass = p[0] + p[1]
    pml = p[1] * POLE_HALF_LENGTH
    sin_th = sin(s[2])
    cos_th = cos(s[2])
    temp = (u + pml * s[3] * s[3] * sin_th - p[2] * s[1]) / total_mass
    th_acc = (p[4] * sin_th - cos_th * temp - p[3] * s[3] / pml) / (
        POLE_HALF_LENGTH * (4.0 / 3.0 - p[1] * cos_th * cos_th / total_mass)
    )
    x_acc = temp - pml * th_acc * cos_th / total_mass
    xd2 = s[1] + dt * x_acc
    x2 = s[0] + dt * xd2
    thd2 = s[3] + dt * th_acc
    th2 = s[2] + dt * thd2
    s[0] = x2
    s[1] = xd2
    s[2] = th2
    s[3] = thd2
    failed[0] = fabs(th2) >= THETA_LIMIT or fabs(x2) >= X_LIMIT
    return 0.0 if failed[0] else 1.0


def collect_steps(int env_idx, double dt, double incline, double reset_scale, int horizon,
                  double[::1] act_low, double[::1] act_high,
                  list mean_weights, double[::1] log_std, list value_weights,
                  double[::1] phi_mean, double[::1] phi_sigma,
                  double[::1] p_low, double[::1] p_high,
                  double[:, ::1] param_z, double[:, ::1] reset_u, double[:, ::1] action_z,
                  double[:, ::1] obs_out, double[:, ::1] act_out,
                  double[::1] rew_out, double[::1] logp_out, double[::1] val_out,
                  unsigned char[::1] done_out, int[::1] ep_idx_out,
                  double[:, ::1] ep_params_out, double[::1] final_obs):
    cdef double[:, ::1] pw0 = mean_weights[0]
    cdef double[::1] pb0 = mean_weights[1]
    cdef double[:, ::1] pw1 = mean_weights[2]
    cdef double[::1] pb1 = mean_weights[3]
    cdef double[:, ::1] pw2 = mean_weights[4]
    cdef double[::1] pb2 = mean_weights[5]
    cdef double[:, ::1] vw0 = value_weights[0]
    cdef double[::1] vb0 = value_weights[1]
    cdef double[:, ::1] vw1 = value_weights[2]
    cdef double[::1] vb1 = value_weights[3]
    cdef double[:, ::1] vw2 = value_weights[4]
    cdef double[::1] vb2 = value_weights[5]

    cdef Py_ssize_t steps = action_z.shape[0]
    cdef Py_ssize_t state_dim = reset_u.shape[1]
    cdef Py_ssize_t act_dim = log_std.shape[0]
    cdef Py_ssize_t param_dim = phi_mean.shape[0]

    if pb0.shape[0] > MAX_HIDDEN or pb1.shape[0] > MAX_HIDDEN or vb0.shape[0] > MAX_HIDDEN \
            or vb1.shape[0] > MAX_HIDDEN:
        raise ValueError("hidden layer too wide for the compiled kernel")
    if state_dim > MAX_DIM or act_dim > MAX_DIM or param_dim > MAX_DIM:
        raise ValueError("dimension too large for the compiled kernel")

    cdef double s[16]
    cdef double params[16]
    cdef double mean[16]
    cdef double sigma[16]
    cdef double val[16]
    cdef double h1[512]
    cdef double h2[512]

    cdef Py_ssize_t t, i, e
    cdef Py_ssize_t ep_steps
    cdef double log_std_sum = 0.0
    cdef double acc, a_i, u_i, u, reward, v
    cdef bint failed, done, final_done

    for i in range(act_dim):
        sigma[i] = exp(log_std[i])
        log_std_sum += log_std[i]

    with nogil:
        e = 0
        for i in range(param_dim):
            v = phi_mean[i] + phi_sigma[i] * param_z[0, i]
            params[i] = clip_scalar(v, p_low[i], p_high[i])
            ep_params_out[0, i] = params[i]
        for i in range(state_dim):
            s[i] = reset_u[0, i] * reset_scale
        ep_steps = 0
        final_done = False

        for t in range(steps):
            for i in range(state_dim):
                obs_out[t, i] = s[i]
            mlp3(s, state_dim, pw0, pb0, pw1, pb1, pw2, pb2, h1, h2, mean)
            mlp3(s, state_dim, vw0, vb0, vw1, vb1, vw2, vb2, h1, h2, val)

            acc = 0.0
            for i in range(act_dim):
                a_i = mean[i] + sigma[i] * action_z[t, i]
                act_out[t, i] = a_i
                u_i = (a_i - mean[i]) / sigma[i]
                acc += u_i * u_i
            logp_out[t] = -0.5 * acc - log_std_sum - 0.5 * act_dim * LN_2PI
            val_out[t] = val[0]

            u = clip_scalar(act_out[t, 0], act_low[0], act_high[0])
            reward = step_env(env_idx, s, u, params, dt, incline, &failed)
            ep_steps += 1
            done = failed or ep_steps >= horizon
            rew_out[t] = reward
            done_out[t] = done
            ep_idx_out[t] = <int>e

            if done:
                if t + 1 < steps:
                    e += 1
                    for i in range(param_dim):
                        v = phi_mean[i] + phi_sigma[i] * param_z[e, i]
                        params[i] = clip_scalar(v, p_low[i], p_high[i])
                        ep_params_out[e, i] = params[i]
                    for i in range(state_dim):
                        s[i] = reset_u[e, i] * reset_scale
                    ep_steps = 0
                else:
                    final_done = True

        for i in range(state_dim):
            final_obs[i] = s[i]

    return e + 1, bool(final_done)


def eval_episodes(int env_idx, double dt, double incline, double reset_scale, int horizon,
                  double[::1] act_low, double[::1] act_high,
                  list mean_weights, double[::1] log_std,
                  double[::1] param_values,
                  double[:, ::1] reset_u, double[:, :, ::1] action_z,
                  double gamma, double[::1] returns_out):
    cdef double[:, ::1] pw0 = mean_weights[0]
    cdef double[::1] pb0 = mean_weights[1]
    cdef double[:, ::1] pw1 = mean_weights[2]
    cdef double[::1] pb1 = mean_weights[3]
    cdef double[:, ::1] pw2 = mean_weights[4]
    cdef double[::1] pb2 = mean_weights[5]

    cdef Py_ssize_t episodes = reset_u.shape[0]
    cdef Py_ssize_t state_dim = reset_u.shape[1]
    cdef Py_ssize_t act_dim = log_std.shape[0]
    cdef Py_ssize_t param_dim = param_values.shape[0]

    if pb0.shape[0] > MAX_HIDDEN or pb1.shape[0] > MAX_HIDDEN:
        raise ValueError("hidden layer too wide for the compiled kernel")
    if state_dim > MAX_DIM or act_dim > MAX_DIM or param_dim > MAX_DIM:
        raise ValueError("dimension too large for the compiled kernel")

    cdef double s[16]
    cdef double params[16]
    cdef double mean[16]
    cdef double sigma[16]
    cdef double h1[512]
    cdef double h2[512]

    cdef Py_ssize_t e, t, i
    cdef double total, disc, u, reward
    cdef bint failed

    for i in range(act_dim):
        sigma[i] = exp(log_std[i])
    for i in range(param_dim):
        params[i] = param_values[i]

    with nogil:
        for e in range(episodes):
            for i in range(state_dim):
                s[i] = reset_u[e, i] * reset_scale
            total = 0.0
            disc = 1.0
            for t in range(horizon):
                mlp3(s, state_dim, pw0, pb0, pw1, pb1, pw2, pb2, h1, h2, mean)
                u = mean[0] + sigma[0] * action_z[e, t, 0]
                u = clip_scalar(u, act_low[0], act_high[0])
                reward = step_env(env_idx, s, u, params, dt, incline, &failed)
                total += disc * reward
                disc *= gamma
                if failed:
                    break
            returns_out[e] = total
