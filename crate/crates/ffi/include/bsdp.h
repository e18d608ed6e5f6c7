#ifndef BSDP_H
#define BSDP_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum BsdpStatus {
  BSDP_STATUS_OK = 0,
  BSDP_STATUS_NULL_POINTER = 1,
  BSDP_STATUS_INVALID_ARGUMENT = 2,
  BSDP_STATUS_SHAPE = 3,
  BSDP_STATUS_NUMERIC = 4,
  BSDP_STATUS_PROTOCOL = 5,
  BSDP_STATUS_CONFIG = 6,
  BSDP_STATUS_IO = 7,
  BSDP_STATUS_PANIC = 8,
} BsdpStatus;

/**
 * Opaque agent handle; owns its replay buffer and episode random stream.
 */
typedef struct BsdpAgent BsdpAgent;

/**
 * Opaque environment handle.
 */
typedef struct BsdpEnv BsdpEnv;

/**
 * Opaque set of finished runs.
 */
typedef struct BsdpRuns BsdpRuns;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null if none. The
 * pointer stays valid until the next failing call on the same thread.
 */
const char *bsdp_last_error(void);

/**
 * Library version as a static C string.
 */
const char *bsdp_version(void);

/**
 * Creates an environment by name (`binary_chain`, `cartpole`,
 * `mountain_car`, `acrobot`). `chain_size` is only read for BinaryChain.
 *
 * # Safety
 * `name` must be a valid C string and `out` a writable pointer.
 */
enum BsdpStatus bsdp_env_create(const char *name,
                                size_t chain_size,
                                uint64_t seed,
                                struct BsdpEnv **out);

/**
 * # Safety
 * `env` must come from [`bsdp_env_create`] and not be used afterwards.
 */
void bsdp_env_free(struct BsdpEnv *env);

/**
 * # Safety
 * `env` must be a live handle; the out pointers must be writable.
 */
enum BsdpStatus bsdp_env_shape(const struct BsdpEnv *env, size_t *state_dim, size_t *action_count);

/**
 * Starts an episode and writes the initial observation.
 *
 * # Safety
 * `env` must be a live handle and `state` hold `len` writable doubles.
 */
enum BsdpStatus bsdp_env_reset(struct BsdpEnv *env, double *state, size_t len);

/**
 * Applies `action`, writing the next observation, reward and end flags.
 *
 * # Safety
 * `env` must be a live handle; `next_state` must hold `len` writable
 * doubles and the remaining out pointers must be writable.
 */
enum BsdpStatus bsdp_env_step(struct BsdpEnv *env,
                              size_t action,
                              double *next_state,
                              size_t len,
                              double *reward,
                              bool *terminal,
                              bool *truncated);

/**
 * Builds an agent (`bsdp`, `bsp`, `bs`, `dqn`, `random`) for `env` with the
 * harness defaults for that environment. BSDP runs prior diversification
 * here, which can take seconds.
 *
 * # Safety
 * `algorithm` must be a valid C string, `env` a live handle and `out`
 * writable.
 */
enum BsdpStatus bsdp_agent_create(const char *algorithm,
                                  const struct BsdpEnv *env,
                                  uint64_t seed,
                                  struct BsdpAgent **out);

/**
 * # Safety
 * `agent` must come from [`bsdp_agent_create`] and not be used afterwards.
 */
void bsdp_agent_free(struct BsdpAgent *agent);

/**
 * Number of Q networks (0 for `random`, 1 for `dqn`).
 *
 * # Safety
 * `agent` must be a live handle and `out` writable.
 */
enum BsdpStatus bsdp_agent_ensemble_size(const struct BsdpAgent *agent, size_t *out);

/**
 * `Q_member(state, a)` for every action.
 *
 * # Safety
 * `agent` must be a live handle, `state` must hold `state_len` doubles and
 * `q` `q_len` writable doubles.
 */
enum BsdpStatus bsdp_agent_q_values(const struct BsdpAgent *agent,
                                    size_t member,
                                    const double *state,
                                    size_t state_len,
                                    double *q,
                                    size_t q_len);

/**
 * Runs one training episode of `agent` on `env`.
 *
 * # Safety
 * Both handles must be live and the out pointers writable.
 */
enum BsdpStatus bsdp_agent_train_episode(struct BsdpAgent *agent,
                                         struct BsdpEnv *env,
                                         double *reward,
                                         size_t *steps,
                                         double *exploration_rate);

/**
 * Parses a `key = value` experiment config and runs every repeat.
 *
 * # Safety
 * `config` must be a valid C string and `out` writable.
 */
enum BsdpStatus bsdp_experiment_run(const char *config, struct BsdpRuns **out);

/**
 * # Safety
 * `runs` must come from [`bsdp_experiment_run`] and not be used afterwards.
 */
void bsdp_runs_free(struct BsdpRuns *runs);

/**
 * # Safety
 * `runs` must be a live handle and `out` writable.
 */
enum BsdpStatus bsdp_runs_count(const struct BsdpRuns *runs, size_t *out);

/**
 * Seed and episode count of run `index`.
 *
 * # Safety
 * `runs` must be a live handle and the out pointers writable.
 */
enum BsdpStatus bsdp_run_info(const struct BsdpRuns *runs,
                              size_t index,
                              uint64_t *seed,
                              size_t *episodes);

/**
 * Per-episode rewards of run `index`; `len` must equal its episode count.
 *
 * # Safety
 * `runs` must be a live handle and `out` hold `len` writable doubles.
 */
enum BsdpStatus bsdp_run_rewards(const struct BsdpRuns *runs,
                                 size_t index,
                                 double *out,
                                 size_t len);

/**
 * Per-episode exploration rates of run `index`.
 *
 * # Safety
 * `runs` must be a live handle and `out` hold `len` writable doubles.
 */
enum BsdpStatus bsdp_run_exploration_rates(const struct BsdpRuns *runs,
                                           size_t index,
                                           double *out,
                                           size_t len);

/**
 * Episodes-to-solve of a BinaryChain run; `-1` when unsolved or not a
 * chain run.
 *
 * # Safety
 * `runs` must be a live handle and `out` writable.
 */
enum BsdpStatus bsdp_run_episodes_to_solve(const struct BsdpRuns *runs, size_t index, int64_t *out);

/**
 * 1-based first episode with positive reward within `cap`, or `-1`.
 *
 * # Safety
 * `rewards` must hold `len` doubles and `out` be writable.
 */
enum BsdpStatus bsdp_episodes_to_solve(const double *rewards, size_t len, size_t cap, int64_t *out);

/**
 * Fraction of true flags; fails with `BSDP_STATUS_NUMERIC` when `len` is 0.
 *
 * # Safety
 * `flags` must hold `len` bools and `out` be writable.
 */
enum BsdpStatus bsdp_exploration_rate(const bool *flags, size_t len, double *out);

/**
 * Trailing moving average of `x` into `out` (same length).
 *
 * # Safety
 * `x` must hold `len` doubles and `out` `len` writable doubles.
 */
enum BsdpStatus bsdp_moving_average(const double *x, size_t len, size_t window, double *out);

/**
 * Mean and `mean ± 0.3 std` band over `runs` row-major curves of `len`
 * points each. Each output holds `len` doubles.
 *
 * # Safety
 * `curves` must hold `runs * len` doubles; the outputs `len` writable
 * doubles each.
 */
enum BsdpStatus bsdp_aggregate_curves(const double *curves,
                                      size_t runs,
                                      size_t len,
                                      double *mean,
                                      double *lower,
                                      double *upper);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* BSDP_H */
