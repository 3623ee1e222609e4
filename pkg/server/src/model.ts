/**
 * Toy diffusion backbone: an isotropic Gaussian mixture over latents whose
 * exact posterior gives the noise prediction in closed form. Stands in for
 * a trained network so the whole serving path can be exercised end to end
 * with real bytes and real determinism guarantees.
 */

import { embedIdForText } from './protocol.js';
import { numel } from './tensor.js';

export class ServerError extends Error {
  code: string;

  constructor(code: string, message: string) {
    super(message);
    this.code = code;
  }
}

export interface ModelConfig {
  seed: number;
  components: number;
  shape: [number, number, number];
  tTrain: number;
  betaStart: number;
  betaEnd: number;
  sigma: number;
}

export const DEFAULT_CONFIG: ModelConfig = {
  seed: 1234,
  components: 8,
  shape: [4, 16, 16],
  tTrain: 1000,
  betaStart: 0.00085,
  betaEnd: 0.012,
  sigma: 1.0,
};

// sqrt(beta) spaced uniformly, then squared; index t is the product of the
// first t alphas so alphaBar[0] = 1 and alphaBar[tTrain] is nearly 0
export function scaledLinearAlphaBar(tTrain: number, betaStart: number, betaEnd: number): Float64Array {
  const lo = Math.sqrt(betaStart);
  const hi = Math.sqrt(betaEnd);
  const alphaBar = new Float64Array(tTrain + 1);
  alphaBar[0] = 1.0;
  let acc = 1.0;
  for (let i = 0; i < tTrain; i++) {
    const root = tTrain === 1 ? lo : lo + ((hi - lo) * i) / (tTrain - 1);
    acc *= 1.0 - root * root;
    alphaBar[i + 1] = acc;
  }
  return alphaBar;
}

/** Small deterministic PRNG (mulberry32), good enough for fixture weights. */
function mulberry32(seed: number): () => number {
  let state = seed >>> 0;
  return () => {
    state = (state + 0x6d2b79f5) >>> 0;
    let t = state;
    t = Math.imul(t ^ (t >>> 15), t | 1);
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61);
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

function gaussianSource(seed: number): () => number {
  const uniform = mulberry32(seed);
  let spare: number | null = null;
  return () => {
    if (spare !== null) {
      const out = spare;
      spare = null;
      return out;
    }
    let u = 0;
    while (u === 0) {
      u = uniform(); // Box-Muller needs u > 0
    }
    const v = uniform();
    const radius = Math.sqrt(-2.0 * Math.log(u));
    spare = radius * Math.sin(2.0 * Math.PI * v);
    return radius * Math.cos(2.0 * Math.PI * v);
  };
}

export class ToyGmmModel {
  readonly config: ModelConfig;
  readonly alphaBar: Float64Array;
  private readonly means: Float64Array[];
  private readonly conditions = new Map<number, number[] | null>();

  constructor(config: Partial<ModelConfig> = {}) {
    this.config = { ...DEFAULT_CONFIG, ...config };
    const { components, shape, tTrain, betaStart, betaEnd } = this.config;
    this.alphaBar = scaledLinearAlphaBar(tTrain, betaStart, betaEnd);
    const n = numel(shape);
    const draw = gaussianSource(this.config.seed);
    this.means = [];
    for (let k = 0; k < components; k++) {
      const mean = new Float64Array(n);
      for (let i = 0; i < n; i++) {
        mean[i] = Math.tanh(draw());
      }
      this.means.push(mean);
    }
    this.conditions.set(0, null); // null text: the whole mixture
  }

  advert() {
    return {
      model: 'toy-gmm',
      schedule: 'scaled_linear',
      shape: [...this.config.shape],
      t_train: this.config.tTrain,
    };
  }

  /**
   * Issue (or re-issue) a condition id for a prompt. Empty text is the
   * null embedding, "components:1,3" selects mixture components directly,
   * anything else hashes onto a single component.
   */
  embedText(text: string): number {
    const id = embedIdForText(text);
    if (id === 0) {
      return id;
    }
    let subset: number[];
    if (text.startsWith('components:')) {
      const parts = text.slice('components:'.length).split(',');
      subset = parts.map(part => {
        // Number('') is 0, so blank tokens must be rejected before casting
        const token = part.trim();
        const k = token === '' ? NaN : Number(token);
        if (!Number.isInteger(k) || k < 0 || k >= this.config.components) {
          throw new ServerError('backend', `cannot embed ${JSON.stringify(text)}: bad component ${JSON.stringify(token)}`);
        }
        return k;
      });
      if (subset.length === 0) {
        throw new ServerError('backend', `cannot embed ${JSON.stringify(text)}: empty component list`);
      }
    } else {
      subset = [id % this.config.components];
    }
    this.conditions.set(id, subset);
    return id;
  }

  hasCondition(id: number): boolean {
    return this.conditions.has(id);
  }

  /** Exact mixture noise prediction at timestep t under a condition. */
  eps(z: Float32Array, t: number, condId: number): Float32Array {
    if (!Number.isInteger(t) || t < 0 || t > this.config.tTrain) {
      throw new ServerError('backend', `t ${t} outside the schedule [0, ${this.config.tTrain}]`);
    }
    const subset = this.conditions.get(condId);
    if (subset === undefined) {
      throw new ServerError('cond_unknown', `unknown condition id ${condId}`);
    }
    const active = subset === null
      ? this.means
      : subset.map(k => this.means[k]);

    const a = this.alphaBar[t];
    const sigma = this.config.sigma;
    const s2 = a * sigma * sigma + 1.0 - a;
    const sqrtA = Math.sqrt(a);
    const n = z.length;

    // responsibilities: softmax of -||z - sqrt(a) mu_k||^2 / (2 s2); the
    // mixture weights are uniform so they cancel inside the softmax
    const logits = new Float64Array(active.length);
    for (let k = 0; k < active.length; k++) {
      const mean = active[k];
      let dist = 0.0;
      for (let i = 0; i < n; i++) {
        const diff = z[i] - sqrtA * mean[i];
        dist += diff * diff;
      }
      logits[k] = -dist / (2.0 * s2);
    }
    let maxLogit = -Infinity;
    for (const logit of logits) {
      maxLogit = Math.max(maxLogit, logit);
    }
    let total = 0.0;
    const resp = new Float64Array(active.length);
    for (let k = 0; k < active.length; k++) {
      resp[k] = Math.exp(logits[k] - maxLogit);
      total += resp[k];
    }

    const out = new Float32Array(n);
    const scale = Math.sqrt(1.0 - a) / s2;
    for (let i = 0; i < n; i++) {
      let muBar = 0.0;
      for (let k = 0; k < active.length; k++) {
        muBar += (resp[k] / total) * active[k][i];
      }
      out[i] = scale * (z[i] - sqrtA * muBar);
    }
    return out;
  }

  /** Pixel -> latent bridge: grayscale [0,1] replicated as 2p-1 per channel. */
  encodeImage(pixels: Float32Array, shape: number[]): { shape: number[]; values: Float32Array } {
    const [c, h, w] = this.config.shape;
    if (shape.length !== 2 || shape[0] !== h || shape[1] !== w) {
      throw new ServerError('shape', `encode expects [${h},${w}], got [${shape}]`);
    }
    const values = new Float32Array(c * h * w);
    for (let ch = 0; ch < c; ch++) {
      for (let i = 0; i < h * w; i++) {
        values[ch * h * w + i] = 2.0 * pixels[i] - 1.0;
      }
    }
    return { shape: [c, h, w], values };
  }

  /** Latent -> pixel bridge: channel mean, then (z+1)/2 clipped to [0,1]. */
  decodeLatent(latent: Float32Array, shape: number[]): { shape: number[]; values: Float32Array } {
    const [c, h, w] = this.config.shape;
    if (shape.length !== 3 || shape[0] !== c || shape[1] !== h || shape[2] !== w) {
      throw new ServerError('shape', `decode expects [${c},${h},${w}], got [${shape}]`);
    }
    const values = new Float32Array(h * w);
    for (let i = 0; i < h * w; i++) {
      let mean = 0.0;
      for (let ch = 0; ch < c; ch++) {
        mean += latent[ch * h * w + i];
      }
      mean /= c;
      values[i] = Math.min(1.0, Math.max(0.0, (mean + 1.0) / 2.0));
    }
    return { shape: [h, w], values };
  }
}
