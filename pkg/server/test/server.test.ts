import { readFileSync } from 'node:fs';
import path from 'node:path';
import { fileURLToPath } from 'node:url';

import { afterAll, beforeAll, describe, expect, it } from 'vitest';

import { FrameType, encodeFrame } from '../src/protocol.js';
import { payloadToTensor, tensorToPayload } from '../src/tensor.js';
import { Ptd1Server } from '../src/server.js';
import { RawClient } from './helpers.js';

const FIXTURE_DIR = fileURLToPath(new URL('../../tests/fixtures/protocol/', import.meta.url));
const LATENT_NUMEL = 4 * 16 * 16;

let server: Ptd1Server;
let addr: string;

beforeAll(async () => {
  server = new Ptd1Server();
  addr = await server.listen();
});

afterAll(async () => {
  await server.close();
});

function probeLatent(seed: number): Float32Array {
  const out = new Float32Array(LATENT_NUMEL);
  let state = seed >>> 0;
  for (let i = 0; i < out.length; i++) {
    state = (Math.imul(state, 1664525) + 1013904223) >>> 0;
    out[i] = state / 2 ** 31 - 1.0;
  }
  return out;
}

describe('Ptd1Server', () => {
  it('answers HELLO with the golden advert bytes', async () => {
    const client = await RawClient.connect(addr);
    const resp = await client.request(FrameType.Hello, { id: 1 });
    const golden = readFileSync(path.join(FIXTURE_DIR, 'hello_resp.bin'));
    expect(resp.raw.equals(golden)).toBe(true);
    client.destroy();
  });

  it('embeds empty text as condition 0', async () => {
    const client = await RawClient.connect(addr);
    const resp = await client.request(FrameType.EmbedText, { id: 2, text: '' });
    expect(resp.type).toBe(FrameType.Result);
    expect(resp.header).toEqual({ cond: 0, id: 2 });
    client.destroy();
  });

  it('answers identical EPS requests with identical bytes', async () => {
    const client = await RawClient.connect(addr);
    const payload = tensorToPayload(probeLatent(5));
    const header = { cond: 0, id: 7, shape: [4, 16, 16], t: 500 };
    const first = await client.request(FrameType.Eps, header, payload);
    const second = await client.request(FrameType.Eps, header, payload);
    expect(first.type).toBe(FrameType.Result);
    expect(first.raw.equals(second.raw)).toBe(true);
    const eps = payloadToTensor(first.payload, [4, 16, 16]);
    expect(eps.some(v => v !== 0)).toBe(true);
    client.destroy();
  });

  it('reports unknown conditions with the golden error bytes', async () => {
    const client = await RawClient.connect(addr);
    const resp = await client.request(
      FrameType.Eps,
      { cond: 9, id: 4, shape: [4, 16, 16], t: 500 },
      tensorToPayload(new Float32Array(LATENT_NUMEL)),
    );
    const golden = readFileSync(path.join(FIXTURE_DIR, 'error_resp.bin'));
    expect(resp.type).toBe(FrameType.Error);
    expect(resp.raw.equals(golden)).toBe(true);
    client.destroy();
  });

  it('rejects EPS with a foreign shape', async () => {
    const client = await RawClient.connect(addr);
    const resp = await client.request(
      FrameType.Eps,
      { cond: 0, id: 5, shape: [1, 2, 2], t: 500 },
      tensorToPayload(new Float32Array(4)),
    );
    expect(resp.type).toBe(FrameType.Error);
    expect(resp.header['code']).toBe('shape');
    client.destroy();
  });

  it('rejects EPS outside the schedule', async () => {
    const client = await RawClient.connect(addr);
    const resp = await client.request(
      FrameType.Eps,
      { cond: 0, id: 6, shape: [4, 16, 16], t: 2000 },
      tensorToPayload(new Float32Array(LATENT_NUMEL)),
    );
    expect(resp.type).toBe(FrameType.Error);
    expect(resp.header['code']).toBe('backend');
    client.destroy();
  });

  it('bridges pixels to latents and back within the frozen bound', async () => {
    const client = await RawClient.connect(addr);
    const pixels = new Float32Array(256);
    for (let i = 0; i < 256; i++) {
      pixels[i] = (i % 17) / 16;
    }
    const enc = await client.request(
      FrameType.Encode, { id: 8, shape: [16, 16] }, tensorToPayload(pixels),
    );
    expect(enc.header['shape']).toEqual([4, 16, 16]);
    const dec = await client.request(
      FrameType.Decode, { id: 9, shape: [4, 16, 16] }, enc.payload,
    );
    expect(dec.header['shape']).toEqual([16, 16]);
    const back = payloadToTensor(dec.payload, [16, 16]);
    for (let i = 0; i < 256; i++) {
      expect(Math.abs(back[i] - pixels[i])).toBeLessThanOrEqual(1.4901161193847656e-8);
    }
    client.destroy();
  });

  it('registers prompt conditions and serves them', async () => {
    const client = await RawClient.connect(addr);
    const embed = await client.request(FrameType.EmbedText, { id: 10, text: 'components:0,3' });
    const cond = embed.header['cond'] as number;
    expect(cond).toBeGreaterThan(0);
    const eps = await client.request(
      FrameType.Eps,
      { cond, id: 11, shape: [4, 16, 16], t: 250 },
      tensorToPayload(probeLatent(3)),
    );
    expect(eps.type).toBe(FrameType.Result);
    client.destroy();
  });

  it('says goodbye and closes the connection', async () => {
    const client = await RawClient.connect(addr);
    const resp = await client.request(FrameType.Bye, { id: 12 });
    expect(resp.type).toBe(FrameType.Result);
    expect(resp.header).toEqual({ id: 12 });
    expect(await client.nextFrame()).toBeNull();
  });

  it('refuses response frames arriving as requests', async () => {
    const client = await RawClient.connect(addr);
    const resp = await client.request(FrameType.Result, { id: 13 });
    expect(resp.type).toBe(FrameType.Error);
    expect(resp.header['code']).toBe('bad_request');
    client.destroy();
  });

  it('drops the connection on stream garbage', async () => {
    const client = await RawClient.connect(addr);
    client.write(Buffer.from('not a frame at all'));
    expect(await client.nextFrame()).toBeNull();
  });

  it('serves several connections against one model', async () => {
    const one = await RawClient.connect(addr);
    const two = await RawClient.connect(addr);
    const payload = tensorToPayload(probeLatent(21));
    const header = { cond: 0, id: 14, shape: [4, 16, 16], t: 300 };
    const fromOne = await one.request(FrameType.Eps, header, payload);
    const fromTwo = await two.request(FrameType.Eps, header, payload);
    expect(fromOne.raw.equals(fromTwo.raw)).toBe(true);
    one.destroy();
    two.destroy();
  });
});
