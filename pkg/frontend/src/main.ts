/** Browser entry point: replay canvas, rating buttons, metrics table. */

import { FeedbackApi } from './api'
import { RATING_CRITERIA, rewardForKey } from './criteria'
import {
  ReplayClock,
  closestApproachIndex,
  episodeDuration,
} from './replay'
import { RatingSession, type SessionPhase } from './session'
import type { EpisodeView, MetricsRow, ProjectedPoint } from './types'

const api = new FeedbackApi((input, init) => fetch(input, init))
const session = new RatingSession(api)

const statusEl = document.getElementById('status') as HTMLElement
const progressEl = document.getElementById('progress') as HTMLElement
const topCanvas = document.getElementById('top-view') as HTMLCanvasElement
const sideCanvas = document.getElementById('side-view') as HTMLCanvasElement
const buttonsEl = document.getElementById('rating-buttons') as HTMLElement
const metricsEl = document.getElementById('metrics') as HTMLElement
const outcomeEl = document.getElementById('outcome') as HTMLElement
const replayBtn = document.getElementById('replay') as HTMLButtonElement

let animation: number | null = null

function bounds(points: ProjectedPoint[][]): {
  min: [number, number]
  max: [number, number]
} {
  const xs = points.flat().map((p) => p[1])
  const ys = points.flat().map((p) => p[2])
  const pad = 0.3
  return {
    min: [Math.min(...xs) - pad, Math.min(...ys) - pad],
    max: [Math.max(...xs) + pad, Math.max(...ys) + pad],
  }
}

function drawView(
  canvas: HTMLCanvasElement,
  ball: ProjectedPoint[],
  ee: ProjectedPoint[],
  upTo: number,
  marker: number,
): void {
  const ctx = canvas.getContext('2d')
  if (!ctx) return
  const { min, max } = bounds([ball, ee])
  const sx = canvas.width / (max[0] - min[0])
  const sy = canvas.height / (max[1] - min[1])
  const toPx = (p: ProjectedPoint): [number, number] => [
    (p[1] - min[0]) * sx,
    canvas.height - (p[2] - min[1]) * sy,
  ]
  ctx.clearRect(0, 0, canvas.width, canvas.height)
  for (const [path, color] of [
    [ball, '#d97706'],
    [ee, '#2563eb'],
  ] as const) {
    ctx.strokeStyle = color
    ctx.lineWidth = 2
    ctx.beginPath()
    path.slice(0, upTo + 1).forEach((p, i) => {
      const [x, y] = toPx(p)
      if (i === 0) ctx.moveTo(x, y)
      else ctx.lineTo(x, y)
    })
    ctx.stroke()
    const head = path[Math.min(upTo, path.length - 1)]
    if (head) {
      const [x, y] = toPx(head)
      ctx.fillStyle = color
      ctx.beginPath()
      ctx.arc(x, y, 5, 0, 2 * Math.PI)
      ctx.fill()
    }
  }
  if (upTo >= marker) {
    const p = ball[marker]
    if (p) {
      const [x, y] = toPx(p)
      ctx.strokeStyle = '#dc2626'
      ctx.lineWidth = 2
      ctx.beginPath()
      ctx.arc(x, y, 9, 0, 2 * Math.PI)
      ctx.stroke()
    }
  }
}

function playEpisode(view: EpisodeView): void {
  if (animation !== null) cancelAnimationFrame(animation)
  const clock = ReplayClock.forEpisode(view)
  const marker = closestApproachIndex(view)
  const start = performance.now()
  const frame = (now: number) => {
    const elapsed = (now - start) / 1000
    const idx = clock.indexAt(elapsed)
    drawView(topCanvas, view.ball_projections.top, view.ee_projections.top, idx, marker)
    drawView(sideCanvas, view.ball_projections.side, view.ee_projections.side, idx, marker)
    if (!clock.finished(elapsed)) {
      animation = requestAnimationFrame(frame)
    } else {
      animation = null
    }
  }
  animation = requestAnimationFrame(frame)
  const g = view.outcome_geometry
  outcomeEl.textContent =
    `${view.episode_id} — ${episodeDuration(view).toFixed(2)} s, ` +
    `closest approach ${g.min_racket_ball_distance.toFixed(3)} m, ` +
    `${g.hit ? 'ball contacted' : g.swung ? 'swing missed' : 'no swing'}`
}

function renderMetrics(rows: MetricsRow[]): void {
  const cells = rows
    .map(
      (r) =>
        `<tr><td>${r.round}</td><td>${(100 * r.hit_rate).toFixed(0)}%</td>` +
        `<td>${(100 * r.success_rate).toFixed(0)}%</td>` +
        `<td>${r.avg_reward.toFixed(2)}</td></tr>`,
    )
    .join('')
  metricsEl.innerHTML =
    '<table><tr><th>round</th><th>hit rate</th><th>success rate</th>' +
    '<th>avg reward</th></tr>' +
    cells +
    '</table>'
}

async function refreshProgress(): Promise<void> {
  const s = await session.summary()
  progressEl.textContent =
    s.state === 'done'
      ? `session finished after ${s.rounds} rounds`
      : `round ${s.round + 1}/${s.rounds} — rated ${s.rated}/${s.batch_n}`
}

async function showPhase(phase: SessionPhase): Promise<void> {
  await refreshProgress()
  if (phase === 'rating') {
    try {
      const view = await session.loadNext()
      if (view) {
        statusEl.textContent = 'rate this stroke'
        playEpisode(view)
        return
      }
    } catch (err) {
      // malformed payload: error card instead of a broken canvas; the rater
      // can still rate it blind from the outcome line or force-advance
      statusEl.textContent = `episode could not be displayed: ${String(err)}`
      return
    }
    phase = 'round-complete'
  }
  renderMetrics(await session.metrics())
  statusEl.textContent =
    phase === 'done'
      ? 'session finished — final metrics below'
      : 'round complete — metrics below; next batch is ready'
  if (phase === 'round-complete') {
    const view = await session.loadNext()
    if (view) playEpisode(view)
  }
}

async function submit(reward: number): Promise<void> {
  try {
    const result = await session.rate(reward)
    if (result.submitted || result.phase !== 'rating') {
      await showPhase(result.phase)
    }
  } catch (err) {
    statusEl.textContent = `rating failed: ${String(err)}`
  }
}

function buildButtons(): void {
  for (const criterion of RATING_CRITERIA) {
    const btn = document.createElement('button')
    btn.textContent = `${criterion.key} — ${criterion.label} (${criterion.reward})`
    btn.addEventListener('click', () => void submit(criterion.reward))
    buttonsEl.appendChild(btn)
  }
  document.addEventListener('keydown', (ev) => {
    const reward = rewardForKey(ev.key)
    if (reward !== null) void submit(reward)
  })
  replayBtn.addEventListener('click', () => {
    const view = session.currentEpisode
    if (view) playEpisode(view)
  })
}

async function start(): Promise<void> {
  buildButtons()
  try {
    const s = await session.summary()
    await showPhase(s.state === 'done' ? 'done' : 'rating')
  } catch (err) {
    statusEl.textContent = `cannot reach the feedback service: ${String(err)}`
  }
}

void start()
