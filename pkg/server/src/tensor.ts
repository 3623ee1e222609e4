/** Flat f32 tensors moving across the wire, shape carried in the header. */

export function numel(shape: number[]): number {
  let n = 1;
  for (const dim of shape) {
    if (!Number.isInteger(dim) || dim < 1) {
      throw new Error(`bad dimension ${dim} in shape [${shape}]`);
    }
    n *= dim;
  }
  return n;
}

export function tensorToPayload(values: Float32Array): Buffer {
  const out = Buffer.alloc(values.length * 4);
  for (let i = 0; i < values.length; i++) {
    out.writeFloatLE(values[i], i * 4);
  }
  return out;
}

export function payloadToTensor(payload: Buffer, shape: number[]): Float32Array {
  const expected = numel(shape) * 4;
  if (payload.length !== expected) {
    throw new Error(`payload has ${payload.length} bytes, shape [${shape}] needs ${expected}`);
  }
  const values = new Float32Array(payload.length / 4);
  for (let i = 0; i < values.length; i++) {
    values[i] = payload.readFloatLE(i * 4);
  }
  return values;
}
