#ifndef EXPLORE_GO_H
#define EXPLORE_GO_H

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

// Context split selectors for [`eg_env_reset`] and [`eg_env_context_count`].
#define EG_SPLIT_TRAIN 0

#define EG_SPLIT_REACHABLE_TEST 1

#define EG_SPLIT_UNREACHABLE_TEST 2

typedef enum EgStatus {
  EG_STATUS_OK = 0,
  // A required pointer argument was null.
  EG_STATUS_NULL_ARGUMENT = 1,
  // A precondition was broken: bad index, action or state.
  EG_STATUS_CONTRACT = 2,
  EG_STATUS_CONFIG = 3,
  EG_STATUS_IO = 4,
  // The output buffer is too small; nothing was written.
  EG_STATUS_BUFFER_TOO_SMALL = 5,
  EG_STATUS_PANIC = 6,
} EgStatus;

// Global and per-worker episodic visit counts.
typedef struct EgCounts EgCounts;

// An environment together with its context sets and one running episode.
typedef struct EgEnv EgEnv;

// Optimal values over the states reachable from an environment's train
// contexts.
typedef struct EgOracle EgOracle;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Copies the calling thread's last error message into `buf` with a NUL
// terminator. `*required` receives the needed size including the NUL; pass
// a null `buf` to query it.
//
// # Safety
// `buf` must be null or valid for `len` bytes; `required` must be null or
// writable.
enum EgStatus eg_last_error_message(char *buf, size_t len, size_t *required);

// NUL-terminated crate version; static storage.
const char *eg_version(void);

// Creates the Illustrative Cross with its four train and four test contexts.
//
// # Safety
// `out` must be writable.
enum EgStatus eg_env_new_cross(struct EgEnv **out);

// Creates a Four Rooms grid of side `grid` with generated context sets.
//
// # Safety
// `out` must be writable.
enum EgStatus eg_env_new_fourrooms(size_t grid,
                                   uint64_t master_seed,
                                   size_t n_train,
                                   size_t n_test,
                                   struct EgEnv **out);

// # Safety
// `env` must be null or a handle from an `eg_env_new_*` call, freed once.
void eg_env_free(struct EgEnv *env);

// # Safety
// `env` must be a live handle; the out pointers must be writable.
enum EgStatus eg_env_dims(const struct EgEnv *env,
                          size_t *action_count,
                          size_t *obs_len,
                          size_t *timeout);

// Observation shape as `[channels, height, width]`.
//
// # Safety
// `env` must be a live handle; `shape` must be valid for three writes.
enum EgStatus eg_env_obs_shape(const struct EgEnv *env, size_t *shape);

// Number of contexts in `split` (0 when the environment has no such split).
//
// # Safety
// `env` must be a live handle; `count` must be writable.
enum EgStatus eg_env_context_count(const struct EgEnv *env, uint32_t split, size_t *count);

// Starts an episode from context `index` of `split`.
//
// # Safety
// `env` must be a live handle.
enum EgStatus eg_env_reset(struct EgEnv *env, uint32_t split, size_t index);

// Applies `action`. `done` is set on reaching the goal, `truncated` when the
// step limit is hit first. Either ends the episode; reset before stepping on.
//
// # Safety
// `env` must be a live handle; the out pointers must be writable.
enum EgStatus eg_env_step(struct EgEnv *env,
                          size_t action,
                          double *reward,
                          bool *done,
                          bool *truncated);

// Writes the current observation (`obs_len` floats, channel-major).
//
// # Safety
// `env` must be a live handle; `buf` must be valid for `len` floats.
enum EgStatus eg_env_observe(const struct EgEnv *env, float *buf, size_t len);

// Enumerates the reachable set of `env` and solves it by value iteration.
//
// # Safety
// `env` must be a live handle; `out` must be writable.
enum EgStatus eg_oracle_new(const struct EgEnv *env, double gamma, struct EgOracle **out);

// # Safety
// `oracle` must be null or a handle from [`eg_oracle_new`], freed once.
void eg_oracle_free(struct EgOracle *oracle);

// Reachable states, of which non-terminal, and the sweep count.
//
// # Safety
// `oracle` must be a live handle; the out pointers must be writable.
enum EgStatus eg_oracle_counts(const struct EgOracle *oracle,
                               size_t *states,
                               size_t *non_terminal,
                               size_t *sweeps);

// # Safety
// `oracle` must be a live handle; `residual` must be writable.
enum EgStatus eg_oracle_bellman_residual(const struct EgOracle *oracle, double *residual);

// V* of the running episode's current state. Fails with `Contract` when
// that state lies outside the reachable set (an unreachable test context).
//
// # Safety
// Both handles must be live; `value` must be writable.
enum EgStatus eg_oracle_value(const struct EgOracle *oracle,
                              const struct EgEnv *env,
                              double *value);

// # Safety
// `out` must be writable.
enum EgStatus eg_counts_new(size_t workers, struct EgCounts **out);

// # Safety
// `counts` must be null or a handle from [`eg_counts_new`], freed once.
void eg_counts_free(struct EgCounts *counts);

// Records `action` taken by `worker` in the env's current state and writes
// the intrinsic reward `N_global^{-1/2}` when the pair is new this episode,
// else 0. Call before [`eg_env_step`].
//
// # Safety
// Both handles must be live; `eta` must be writable.
enum EgStatus eg_counts_observe(struct EgCounts *counts,
                                const struct EgEnv *env,
                                size_t worker,
                                size_t action,
                                double *eta);

// Clears `worker`'s episodic counts; global counts persist.
//
// # Safety
// `counts` must be a live handle.
enum EgStatus eg_counts_reset_episode(struct EgCounts *counts, size_t worker);

// Per-worker exploration coefficients `phi * lambda^(1 + alpha*i/(N-1))`.
//
// # Safety
// `out` must be valid for `workers` doubles.
enum EgStatus eg_tee_betas(double phi, double lambda, double alpha, size_t workers, double *out);

// Trains one seed from a JSON config (nested or dotted keys) and writes the
// config echo, metrics CSV and checkpoint into `out_dir`.
//
// # Safety
// `config_json` and `out_dir` must be NUL-terminated strings.
enum EgStatus eg_run(const char *config_json, uint64_t seed, const char *out_dir);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* EXPLORE_GO_H */
