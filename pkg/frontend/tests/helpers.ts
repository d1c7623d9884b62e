/** Test doubles: episode fixtures and an in-memory fake of the feedback
 * service, exercised through the same FetchLike surface the real client
 * uses in the browser. */

import type { FetchLike } from '../src/api'
import type { EpisodeView, SessionSummary, TimedPoint } from '../src/types'

export function jsonResponse(status: number, body: unknown): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { 'Content-Type': 'application/json' },
  })
}

/** Episode whose ball flies along +x while the racket sweeps to meet it;
 * both sampled at 50 Hz over `duration` seconds. */
export function makeEpisode(
  id: string,
  duration = 1.0,
  rate = 50,
): EpisodeView {
  const n = Math.round(duration * rate) + 1
  const ball: TimedPoint[] = []
  const ee: TimedPoint[] = []
  for (let i = 0; i < n; i++) {
    const t = i / rate
    ball.push([t, 9 - 8 * t, 0.2, 1.5 - 2 * t * t])
    ee.push([t, 5 + 0.5 * Math.sin(Math.PI * t), 0.2, 1.0])
  }
  const project = (path: TimedPoint[]) => ({
    top: path.map((p) => [p[0], p[1], p[2]] as [number, number, number]),
    side: path.map((p) => [p[0], p[1], p[3]] as [number, number, number]),
  })
  return {
    episode_id: id,
    ball_path: ball,
    ee_path: ee,
    ball_projections: project(ball),
    ee_projections: project(ee),
    outcome_geometry: {
      hit: false,
      min_racket_ball_distance: 0.4,
      swung: true,
      duration,
    },
  }
}

const REWARDS = [0, 0.25, 0.5, 1, 2]

export interface FakeServiceLog {
  posts: { episodeId: string; body: unknown; idempotencyKey: string | null }[]
}

/** In-memory stand-in for the service: ordered queue, duplicate-rating
 * conflicts, off-scale rejection, round close when the queue drains. */
export class FakeService {
  ratings = new Map<string, number>()
  log: FakeServiceLog = { posts: [] }
  round = 0
  state: 'collecting' | 'done' = 'collecting'
  /** Network failures to inject before rating POSTs succeed. */
  failNextPosts = 0

  private episodes: EpisodeView[]

  constructor(
    private batchN: number,
    private rounds = 1,
  ) {
    this.episodes = this.makeBatch()
  }

  private makeBatch(): EpisodeView[] {
    return Array.from({ length: this.batchN }, (_, i) =>
      makeEpisode(`r${this.round}-e${i}`),
    )
  }

  private summary(): SessionSummary {
    const rated = [...this.ratings.keys()].filter((k) =>
      k.startsWith(`r${this.round}-`),
    ).length
    return {
      id: 'session-1',
      state: this.state,
      round: this.round,
      rounds: this.rounds,
      batch_n: this.episodes.length,
      rated,
      pending: this.state === 'done' ? 0 : this.episodes.length - rated,
    }
  }

  private pending(): EpisodeView[] {
    if (this.state === 'done') return []
    return this.episodes.filter((e) => !this.ratings.has(e.episode_id))
  }

  fetch: FetchLike = async (input, init) => {
    const url = typeof input === 'string' ? input : String(input)
    if (url.endsWith('/api/session')) {
      return jsonResponse(200, this.summary())
    }
    if (url.endsWith('/api/episodes/next')) {
      const next = this.pending()[0]
      if (!next) return jsonResponse(404, { detail: 'no pending episodes' })
      return jsonResponse(200, next)
    }
    if (url.endsWith('/api/metrics')) {
      return jsonResponse(200, {
        rows: [
          {
            round: 'base',
            n_balls: 10,
            hit_rate: 0.6,
            success_rate: 0.4,
            avg_reward: 0.75,
          },
        ],
      })
    }
    const match = url.match(/\/api\/episodes\/(.+)\/rating$/)
    if (match && init?.method === 'POST') {
      if (this.failNextPosts > 0) {
        this.failNextPosts -= 1
        throw new TypeError('network failure')
      }
      const episodeId = match[1]!
      const headers = new Headers(init.headers)
      const body = JSON.parse(String(init.body)) as { reward: number }
      this.log.posts.push({
        episodeId,
        body,
        idempotencyKey: headers.get('Idempotency-Key'),
      })
      if (this.state === 'done') {
        return jsonResponse(409, { detail: 'session finished' })
      }
      if (!REWARDS.includes(body.reward)) {
        return jsonResponse(422, { detail: 'reward not on the scale' })
      }
      if (!this.episodes.some((e) => e.episode_id === episodeId)) {
        return jsonResponse(404, { detail: 'unknown episode id' })
      }
      if (this.ratings.has(episodeId)) {
        return jsonResponse(409, { detail: 'episode already rated' })
      }
      this.ratings.set(episodeId, body.reward)
      if (this.pending().length === 0) {
        this.round += 1
        if (this.round >= this.rounds) this.state = 'done'
        else this.episodes = this.makeBatch()
      }
      return jsonResponse(200, {
        episode_id: episodeId,
        accepted: true,
        session: this.summary(),
      })
    }
    return jsonResponse(404, { detail: `no route for ${url}` })
  }
}
