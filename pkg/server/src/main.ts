/** Command-line entry: bind a toy model server to an address and serve. */

import { parseArgs } from 'node:util';

import { parseAddr } from './protocol.js';
import { ToyGmmModel } from './model.js';
import { Ptd1Server } from './server.js';

async function main(): Promise<number> {
  const { values } = parseArgs({
    options: {
      addr: { type: 'string', default: '127.0.0.1:9041' },
      model: { type: 'string', default: 'toy-gmm' },
      seed: { type: 'string', default: '1234' },
    },
  });

  if (values.model !== 'toy-gmm') {
    console.error(`unknown model ${values.model}; only toy-gmm is bundled`);
    return 2;
  }
  const seed = Number(values.seed);
  if (!Number.isInteger(seed) || seed < 0) {
    console.error(`seed must be a non-negative integer, got ${values.seed}`);
    return 2;
  }

  const { host, port } = parseAddr(values.addr!);
  const server = new Ptd1Server(new ToyGmmModel({ seed }));
  const addr = await server.listen(host, port);
  const advert = server.model.advert();
  console.log(`model server listening on ${addr} model=${advert.model} shape=[${advert.shape}]`);

  process.on('SIGINT', () => {
    server.close().then(() => process.exit(0));
  });
  return 0;
}

main().then(code => {
  if (code !== 0) {
    process.exit(code);
  }
});
