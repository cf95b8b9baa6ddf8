#!/usr/bin/env node
import { join } from 'node:path';

import { writeGolden } from './fixtures.js';

writeGolden(process.argv[2] ?? join('..', 'tests', 'data'));
