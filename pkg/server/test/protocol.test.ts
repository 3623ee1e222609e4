import { readFileSync } from 'node:fs';
import path from 'node:path';
import { fileURLToPath } from 'node:url';

import { describe, expect, it } from 'vitest';

import {
  FrameType,
  ProtocolError,
  canonicalHeader,
  decodeFrame,
  embedIdForText,
  encodeFrame,
  frameSize,
  parseAddr,
} from '../src/protocol.js';
import { payloadToTensor, tensorToPayload } from '../src/tensor.js';

const FIXTURE_DIR = fileURLToPath(new URL('../../tests/fixtures/protocol/', import.meta.url));

interface ManifestEntry {
  name: string;
  file: string;
  type: string;
  type_code: number;
  header: Record<string, unknown>;
  payload_f32: number[] | null;
}

const manifest: { frames: ManifestEntry[] } = JSON.parse(
  readFileSync(path.join(FIXTURE_DIR, 'manifest.json'), 'utf8'),
);

function fixtureBytes(entry: ManifestEntry): Buffer {
  return readFileSync(path.join(FIXTURE_DIR, entry.file));
}

function rawFrame(type: number, headerBytes: Buffer, payload: Buffer = Buffer.alloc(0)): Buffer {
  const head = Buffer.alloc(9);
  head.write('PTD1', 0, 'ascii');
  head.writeUInt8(type, 4);
  head.writeUInt32LE(headerBytes.length, 5);
  const plen = Buffer.alloc(8);
  plen.writeBigUInt64LE(BigInt(payload.length), 0);
  return Buffer.concat([head, headerBytes, plen, payload]);
}

describe('golden frames', () => {
  it('manifest carries all seven conformance frames', () => {
    expect(manifest.frames).toHaveLength(7);
  });

  for (const entry of manifest.frames) {
    it(`${entry.name} decodes and re-encodes byte-exactly`, () => {
      const data = fixtureBytes(entry);
      const frame = decodeFrame(data);
      expect(frame.type).toBe(entry.type_code);
      expect(frame.header).toEqual(entry.header);
      expect(frame.end).toBe(data.length);
      if (entry.payload_f32 !== null) {
        const values = payloadToTensor(frame.payload, [entry.payload_f32.length]);
        expect(Array.from(values)).toEqual(entry.payload_f32);
      } else {
        expect(frame.payload.length).toBe(0);
      }
      const again = encodeFrame(frame.type, frame.header as never, frame.payload);
      expect(again.equals(data)).toBe(true);
    });
  }

  it('a concatenated stream of all fixtures walks frame by frame', () => {
    const stream = Buffer.concat(manifest.frames.map(fixtureBytes));
    let offset = 0;
    for (const entry of manifest.frames) {
      const frame = decodeFrame(stream, offset);
      expect(frame.header).toEqual(entry.header);
      offset = frame.end;
    }
    expect(offset).toBe(stream.length);
  });
});

describe('canonical headers', () => {
  it('sorts keys and strips whitespace', () => {
    const bytes = canonicalHeader({ t: 5, cond: 0, shape: [1, 2] });
    expect(bytes.toString('ascii')).toBe('{"cond":0,"shape":[1,2],"t":5}');
  });

  it('escapes non-ascii text the way the fixtures do', () => {
    expect(canonicalHeader({ text: 'snow étude' }).toString('ascii'))
      .toBe('{"text":"snow \\u00e9tude"}');
    expect(canonicalHeader({ text: '☃' }).toString('ascii'))
      .toBe('{"text":"\\u2603"}');
  });

  it('refuses floats, booleans and nulls', () => {
    expect(() => canonicalHeader({ x: 1.5 })).toThrow(ProtocolError);
    expect(() => canonicalHeader({ x: true as never })).toThrow(ProtocolError);
    expect(() => canonicalHeader({ x: null as never })).toThrow(ProtocolError);
    expect(() => canonicalHeader({ x: [1, [2, 2.5]] })).toThrow(ProtocolError);
  });

  it('round trips nested structures', () => {
    const header = { a: { z: [1, 2, { b: 'x' }], a: 'y' }, id: 2 ** 53 };
    const frame = encodeFrame(FrameType.Hello, header);
    expect(decodeFrame(frame).header).toEqual(header);
  });
});

describe('frame validation', () => {
  const good = encodeFrame(FrameType.Eps, { id: 1, t: 5 }, tensorToPayload(new Float32Array([1, 2])));

  it('rejects a bad magic', () => {
    const bad = Buffer.from(good);
    bad.write('XXXX', 0, 'ascii');
    expect(() => decodeFrame(bad)).toThrow(/bad magic/);
    expect(() => frameSize(bad)).toThrow(/bad magic/);
  });

  it('rejects unknown message types', () => {
    const bad = Buffer.from(good);
    bad.writeUInt8(99, 4);
    expect(() => decodeFrame(bad)).toThrow(/unknown message type 99/);
  });

  it('rejects truncation at every boundary', () => {
    for (const cut of [0, 4, 8, 12, good.length - 1]) {
      expect(() => decodeFrame(good.subarray(0, cut))).toThrow(/truncated/);
    }
  });

  it('rejects non-canonical headers', () => {
    expect(() => decodeFrame(rawFrame(0, Buffer.from('{"id": 1}')))).toThrow(/canonical/);
    expect(() => decodeFrame(rawFrame(0, Buffer.from('{"t":1,"id":2}')))).toThrow(/canonical/);
    expect(() => decodeFrame(rawFrame(0, Buffer.from('{"x":1.25}')))).toThrow(/canonical/);
    expect(() => decodeFrame(rawFrame(0, Buffer.from('[1,2]')))).toThrow(/object/);
    expect(() => decodeFrame(rawFrame(0, Buffer.from('{"x":')))).toThrow(/JSON/);
  });

  it('rejects an oversize payload claim without allocating', () => {
    const frame = rawFrame(0, Buffer.from('{}'));
    frame.writeBigUInt64LE(1n << 62n, 9 + 2);
    expect(() => decodeFrame(frame)).toThrow(/exceeds limit/);
  });

  it('rejects misaligned payloads at encode time', () => {
    expect(() => encodeFrame(FrameType.Eps, { id: 1 }, Buffer.from('abc'))).toThrow(/multiple of 4/);
  });

  it('frameSize answers null until enough bytes arrived', () => {
    expect(frameSize(good.subarray(0, 5))).toBeNull();
    expect(frameSize(good.subarray(0, good.length - 4))).toBe(good.length);
    expect(frameSize(good)).toBe(good.length);
  });
});

describe('tensor payloads', () => {
  it('round trips f32 values', () => {
    const values = new Float32Array([0.5, -1.25, 3.0, 0.125]);
    const back = payloadToTensor(tensorToPayload(values), [2, 2]);
    expect(Array.from(back)).toEqual(Array.from(values));
  });

  it('rejects size mismatches', () => {
    expect(() => payloadToTensor(Buffer.alloc(12), [2, 2])).toThrow(/16/);
  });
});

describe('embed ids', () => {
  it('pins empty text to the null id', () => {
    expect(embedIdForText('')).toBe(0);
  });

  it('matches the frozen reference id', () => {
    expect(embedIdForText('a watercolor forest')).toBe(1517255098);
  });

  it('never returns 0 for non-empty text', () => {
    for (const text of ['a', 'b', 'zebra', 'components:0,1']) {
      expect(embedIdForText(text)).toBeGreaterThan(0);
    }
  });
});

describe('parseAddr', () => {
  it('splits host and port', () => {
    expect(parseAddr('127.0.0.1:9041')).toEqual({ host: '127.0.0.1', port: 9041 });
  });

  it('rejects missing pieces', () => {
    expect(() => parseAddr('localhost')).toThrow(/host:port/);
    expect(() => parseAddr(':123')).toThrow(/host:port/);
    expect(() => parseAddr('h:abc')).toThrow(/not an integer/);
  });
});
