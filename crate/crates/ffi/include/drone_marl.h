#ifndef DRONE_MARL_H
#define DRONE_MARL_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Number of actions, in the order N, S, E, W, NE, NW, SE, SW, Hover, Execute.
 */
#define DM_ACTION_COUNT 10

typedef enum DmEpisodeStatus {
  DM_EPISODE_STATUS_RUNNING = 0,
  DM_EPISODE_STATUS_DONE = 1,
  DM_EPISODE_STATUS_TIMED_OUT = 2,
} DmEpisodeStatus;

typedef enum DmStatus {
  DM_STATUS_OK = 0,
  DM_STATUS_NULL_POINTER = 1,
  DM_STATUS_INVALID_ARGUMENT = 2,
  DM_STATUS_ILLEGAL_ACTION = 3,
  DM_STATUS_DIMENSION_MISMATCH = 4,
  DM_STATUS_BUFFER_TOO_SMALL = 5,
  DM_STATUS_IO = 6,
  DM_STATUS_CONFIG = 7,
  DM_STATUS_INTERNAL = 8,
  DM_STATUS_PANIC = 9,
} DmStatus;

/**
 * A frozen Q-network loaded from a checkpoint.
 */
typedef struct DmAgent DmAgent;

/**
 * A mission instance with its own environment random stream.
 */
typedef struct DmEnv DmEnv;

typedef struct DmPowerRates {
  double p_forward;
  double p_hover;
  double p_execute;
} DmPowerRates;

typedef struct DmPhysicalParams {
  double rotor_diameter;
  uint32_t rotor_count;
  double mass;
  double gravity;
  double speed;
  double pitch_angle;
  double battery_efficiency;
  double air_density;
  double drag_force;
} DmPhysicalParams;

/**
 * Result of one drone's sub-step.
 */
typedef struct DmStepResult {
  double energy_spent;
  uint32_t progress;
  /**
   * Reward in individual mode; 0 in shared mode, where the fleet reward
   * comes from `dm_env_end_time_step`.
   */
  double reward;
  bool mission_done;
  bool episode_failed;
} DmStepResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the last error message of this thread into `buf` (NUL
 * terminated, truncated to `len`). Returns the full message length
 * without the terminator; 0 when there is no error.
 *
 * # Safety
 * `buf` must be null or point to `len` writable bytes.
 */
size_t dm_last_error_message(char *buf, size_t len);

/**
 * The scaled per-step rates used by the bundled scenarios.
 *
 * # Safety
 * `out` must be null or valid for writes.
 */
enum DmStatus dm_simulation_rates(struct DmPowerRates *out);

/**
 * Forward and hover power for `params`, with `p_execute` passed through.
 *
 * # Safety
 * `params` and `out` must be null or valid.
 */
enum DmStatus dm_physical_rates(const struct DmPhysicalParams *params,
                                double p_execute,
                                struct DmPowerRates *out);

/**
 * Physical parameters of the reference drone.
 *
 * # Safety
 * `out` must be null or valid for writes.
 */
enum DmStatus dm_base_case_params(struct DmPhysicalParams *out);

/**
 * A `width`×`height` mission with `task_count` randomly placed tasks of
 * length 1 to 5, simulation rates and default individual rewards. The
 * environment is already reset.
 *
 * # Safety
 * `out` must be null or valid for writes.
 */
enum DmStatus dm_env_new(size_t width,
                         size_t height,
                         size_t task_count,
                         uint64_t seed,
                         struct DmEnv **out);

/**
 * Builds an environment from run-configuration TOML text.
 *
 * # Safety
 * `toml` must be null or a NUL-terminated string; `out` valid for writes.
 */
enum DmStatus dm_env_from_config(const char *toml, uint64_t seed, struct DmEnv **out);

/**
 * # Safety
 * `env` must come from `dm_env_new`/`dm_env_from_config` and not be used
 * afterwards. Null is ignored.
 */
void dm_env_free(struct DmEnv *env);

/**
 * Starts a new episode from the environment's own random stream.
 *
 * # Safety
 * `env` must be null or a live handle.
 */
enum DmStatus dm_env_reset(struct DmEnv *env);

/**
 * # Safety
 * `env` and `out` must be null or valid.
 */
enum DmStatus dm_env_drone_count(const struct DmEnv *env, size_t *out);

/**
 * Length of the feature vector written by `dm_env_encode`.
 *
 * # Safety
 * `env` and `out` must be null or valid.
 */
enum DmStatus dm_env_feature_dim(const struct DmEnv *env, size_t *out);

/**
 * Bit `i` set means action `i` is legal for `drone`.
 *
 * # Safety
 * `env` and `out` must be null or valid.
 */
enum DmStatus dm_env_legal_mask(const struct DmEnv *env, size_t drone, uint16_t *out);

/**
 * Applies one drone's sub-step. Drones act in id order; call
 * `dm_env_end_time_step` after the last one.
 *
 * # Safety
 * `env` must be a live handle; `out` null or valid for writes.
 */
enum DmStatus dm_env_step(struct DmEnv *env,
                          size_t drone,
                          uint32_t action,
                          struct DmStepResult *out);

/**
 * Closes the current time step and advances the clock. Writes the
 * fleet-wide shared reward for the step (computed whatever the mode).
 *
 * # Safety
 * `env` must be a live handle; `shared_reward_out` null or valid.
 */
enum DmStatus dm_env_end_time_step(struct DmEnv *env, double *shared_reward_out);

/**
 * Writes `drone`'s view of the state into `buf`, which must hold at least
 * `dm_env_feature_dim` values.
 *
 * # Safety
 * `env` must be a live handle; `buf` must point to `len` writable doubles.
 */
enum DmStatus dm_env_encode(const struct DmEnv *env, size_t drone, double *buf, size_t len);

/**
 * # Safety
 * `env` must be a live handle; outputs null or valid.
 */
enum DmStatus dm_env_status(const struct DmEnv *env,
                            enum DmEpisodeStatus *status_out,
                            uint32_t *time_step_out);

/**
 * Remaining battery of `drone`.
 *
 * # Safety
 * `env` and `out` must be null or valid.
 */
enum DmStatus dm_env_battery(const struct DmEnv *env, size_t drone, double *out);

/**
 * Whether the finished mission succeeded. Fails with
 * `DM_STATUS_INVALID_ARGUMENT` while tasks remain.
 *
 * # Safety
 * `env` and `out` must be null or valid.
 */
enum DmStatus dm_env_success(const struct DmEnv *env, bool *out);

/**
 * Loads a network checkpoint written by the training command.
 *
 * # Safety
 * `path` must be null or NUL-terminated; `out` valid for writes.
 */
enum DmStatus dm_agent_load(const char *path, struct DmAgent **out);

/**
 * # Safety
 * `agent` must come from `dm_agent_load` and not be used afterwards.
 * Null is ignored.
 */
void dm_agent_free(struct DmAgent *agent);

/**
 * # Safety
 * `agent` and `out` must be null or valid.
 */
enum DmStatus dm_agent_input_dim(const struct DmAgent *agent, size_t *out);

/**
 * Writes the ten Q-values for `features` into `q_out`.
 *
 * # Safety
 * `features` must point to `len` doubles and `q_out` to 10 writable doubles.
 */
enum DmStatus dm_agent_q_values(const struct DmAgent *agent,
                                const double *features,
                                size_t len,
                                double *q_out);

/**
 * Highest-valued action among those set in `legal_mask`, lowest index
 * on ties.
 *
 * # Safety
 * `features` must point to `len` doubles; `action_out` valid for writes.
 */
enum DmStatus dm_agent_greedy(const struct DmAgent *agent,
                              const double *features,
                              size_t len,
                              uint16_t legal_mask,
                              uint32_t *action_out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DRONE_MARL_H */
