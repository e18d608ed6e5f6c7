#include <stdio.h>
#include <string.h>

#include "bsdp.h"

#define CHECK(call)                                                        \
    do {                                                                   \
        BsdpStatus st_ = (call);                                           \
        if (st_ != BSDP_STATUS_OK) {                                       \
            fprintf(stderr, "%s failed (%d): %s\n", #call, (int)st_,       \
                    bsdp_last_error());                                    \
            return 1;                                                      \
        }                                                                  \
    } while (0)

int main(void) {
    BsdpEnv *env = NULL;
    if (bsdp_env_create("no_such_env", 0, 0, &env) != BSDP_STATUS_CONFIG ||
        bsdp_last_error() == NULL) {
        fprintf(stderr, "unknown env name was accepted\n");
        return 1;
    }

    CHECK(bsdp_env_create("cartpole", 0, 1, &env));
    size_t dim = 0, actions = 0;
    CHECK(bsdp_env_shape(env, &dim, &actions));
    if (dim != 4 || actions != 2) {
        fprintf(stderr, "cartpole shape %zu x %zu\n", dim, actions);
        return 1;
    }
    double s[4], r = 0.0;
    bool term = false, trunc = false;
    CHECK(bsdp_env_reset(env, s, 4));
    CHECK(bsdp_env_step(env, 1, s, 4, &r, &term, &trunc));
    if (bsdp_env_step(env, 0, s, 3, &r, &term, &trunc) != BSDP_STATUS_SHAPE) {
        fprintf(stderr, "short buffer was accepted\n");
        return 1;
    }

    BsdpAgent *agent = NULL;
    CHECK(bsdp_agent_create("dqn", env, 1, &agent));
    size_t members = 0, steps = 0;
    CHECK(bsdp_agent_ensemble_size(agent, &members));
    double q[2], rate = 0.0;
    CHECK(bsdp_agent_q_values(agent, 0, s, 4, q, 2));
    CHECK(bsdp_agent_train_episode(agent, env, &r, &steps, &rate));
    if (members != 1 || steps == 0 || r != (double)steps || rate < 0.0 || rate > 1.0) {
        fprintf(stderr, "episode: members %zu steps %zu reward %f rate %f\n", members, steps, r, rate);
        return 1;
    }
    bsdp_agent_free(agent);
    bsdp_env_free(env);

    const char *cfg =
        "[experiment]\n"
        "algorithm = random\n"
        "env = binary_chain\n"
        "chain_size = 2\n"
        "episodes = 200\n"
        "repeats = 3\n";
    BsdpRuns *runs = NULL;
    CHECK(bsdp_experiment_run(cfg, &runs));
    size_t n = 0;
    CHECK(bsdp_runs_count(runs, &n));
    if (n != 3) {
        fprintf(stderr, "%zu runs\n", n);
        return 1;
    }
    for (size_t i = 0; i < n; i++) {
        uint64_t seed = 0;
        size_t episodes = 0;
        int64_t solve = 0;
        CHECK(bsdp_run_info(runs, i, &seed, &episodes));
        CHECK(bsdp_run_episodes_to_solve(runs, i, &solve));
        double rewards[200];
        CHECK(bsdp_run_rewards(runs, i, rewards, episodes));
        if (seed != i || solve != (int64_t)episodes || rewards[episodes - 1] <= 0.0) {
            fprintf(stderr, "run %zu: seed %llu solve %lld episodes %zu\n", i,
                    (unsigned long long)seed, (long long)solve, episodes);
            return 1;
        }
    }
    bsdp_runs_free(runs);

    double ma[3], x[3] = {3.0, -1.0, 4.0};
    CHECK(bsdp_moving_average(x, 3, 2, ma));
    bool flags[4] = {true, false, false, false};
    CHECK(bsdp_exploration_rate(flags, 4, &rate));
    if (ma[1] != 1.0 || ma[2] != 1.5 || rate != 0.25) {
        fprintf(stderr, "metrics: %f %f %f\n", ma[1], ma[2], rate);
        return 1;
    }
    if (bsdp_exploration_rate(flags, 0, &rate) != BSDP_STATUS_NUMERIC) {
        fprintf(stderr, "empty episode rate was defined\n");
        return 1;
    }
    printf("ok\n");
    return 0;
}
