/** Shapes of the payloads served by the feedback service. */

/** One replay sample: [time, x, y, z] on a shared clock. */
export type TimedPoint = [number, number, number, number]

/** One projected replay sample: [time, horizontal, vertical]. */
export type ProjectedPoint = [number, number, number]

export interface Projections {
  top: ProjectedPoint[]
  side: ProjectedPoint[]
}

export interface OutcomeGeometry {
  hit: boolean
  min_racket_ball_distance: number
  swung: boolean
  duration: number
}

export interface EpisodeView {
  episode_id: string
  ball_path: TimedPoint[]
  ee_path: TimedPoint[]
  ball_projections: Projections
  ee_projections: Projections
  outcome_geometry: OutcomeGeometry
}

export interface SessionSummary {
  id: string
  state: 'collecting' | 'done'
  round: number
  rounds: number
  batch_n: number
  rated: number
  pending: number
}

export interface MetricsRow {
  round: number | 'base'
  n_balls: number
  hit_rate: number
  success_rate: number
  avg_reward: number
  batch_n?: number
  n_used?: number
  forced?: boolean
}

export interface RatingAck {
  episode_id: string
  accepted: boolean
  session: SessionSummary
}
